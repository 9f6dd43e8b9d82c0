# Staggered Embedded-Boundary Solver Package
