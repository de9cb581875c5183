from varjet.errors import (AdmissibilityError,
                           BindingError,
                           ChartError,
                           EvaluationError,
                           ExpressionSyntaxError,
                           GeneratorError,
                           MetricError,
                           ModelFormatError,
                           NormalFormError,
                           OrderError,
                           ProjectionError,
                           RangeError,
                           SingularityError,
                           VarjetError)
from varjet.jet_core import (Coord,
                             JetChart,
                             JetPoint,
                             Metric,
                             prolong_curve,
                             sample_jetpoint,
                             sample_points)
from varjet.expr import (DiffOperator,
                         Expr,
                         apply_operator,
                         constant,
                         coordinate,
                         evaluate,
                         evaluate_many,
                         literal,
                         partial,
                         substitute,
                         total_derivative)
from varjet.parser_io import (Model,
                              load_model,
                              parse_expression,
                              parse_model,
                              render_expression,
                              save_model)
from varjet.variational import (DynamicalForm,
                                LagrangianDef,
                                euler_poisson,
                                generalized_momentum,
                                helmholtz_residuals,
                                helmholtz_residuals_split,
                                zermelo_residuals)
from varjet.homogeneous import (lift_equation,
                                lift_form,
                                lift_lagrangian,
                                permute_point,
                                project_jet)
from varjet.normal_forms import (Shape3,
                                 Shape4,
                                 coefficients_from_lagrangian,
                                 extract_shape3,
                                 extract_shape4,
                                 shape3_condition_residuals,
                                 shape4_condition_residuals)
from varjet.symmetry import (appendix_pde_residuals,
                             lorentz_generator,
                             nogo_certificate,
                             symmetry_residual_exact2d,
                             symmetry_residual_lsq,
                             symmetry_sweep)
from varjet.top_model import (TopConfig,
                              Trajectory,
                              build_top_model,
                              compare_trajectories,
                              conserved_momentum,
                              integrate_batch,
                              integrate_homogeneous,
                              integrate_parametric,
                              mp_planar_form,
                              solve_acceleration_parametric)
from varjet.reports import Report
from varjet.cli import run_command, _main
