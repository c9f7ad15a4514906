# Runtime Entities Package
