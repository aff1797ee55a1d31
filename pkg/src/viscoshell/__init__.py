"""Thin viscoelastic flexural shells: 2D limit model, scaled 3D solver and comparison harness."""
from .errors import (ConfigError, DegenerateChart, ElasticCaseUnsupported, EpsilonTooLarge, InadmissibleField,
                     IndefiniteSystem, MeshMismatch, SolverFailure, ViscoShellError, ZeroField)
from .geometry import (CHARTS, SurfaceChart, asymptotic_check, cylinder, graph, hemisphere_patch, plate,
                       surface_eval, volume_eval)
from .material import (MaterialParams, lambda_k_residual, reduction_identity_residuals, tensors_2d, tensors_3d,
                       twod_coefficients)
from .kinematics import Field2D, Field3D, gamma_eval, lift, rho_eval, strain3d_eval
from .loads import Loads
from .flexural2d import Flexural2D, MemoryState, Mesh2D, Problem2D, solve2d
from .shell3d import Mesh3D, Shell3D, korn_ratio, transverse_average
from .harness import (ConvergenceReport, ConvergenceSetup, limit_strain_probe, run_convergence,
                      verify_identities, volterra_ode_check)
from .cli import cli_main

__version__ = "0.1.0"
