# Gate Racing Simulator Application Package
