# Simulation Services Package
