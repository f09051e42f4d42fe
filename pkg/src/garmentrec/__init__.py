"""Single-view garment reconstruction at desk scale.

Library layout:

- mesh / meshio: triangle meshes, point clouds, scalar grids, OBJ/XYZ/PLY I/O
- body: procedural parametric body, skinning, pose loss and pose fitting
- template: adaptable template, semantic regions, category activation
- lines: feature-line polylines, annotations, fitting losses
- autodiff / nets: minimal gradient engine, GCN line regressor, occupancy MLP
- laplacian: handle-based Laplacian surface deformation
- implicit: occupancy-field grids and marching cubes
- register: adaptive detail-transfer registration and the refinement loss
- metrics: Chamfer / Earth Mover's distance benchmarking
- synth: synthetic garment generator with ground truth
- pipeline / cli: end-to-end orchestration, benchmark and ablation runners
"""

__version__ = "0.1.0"
