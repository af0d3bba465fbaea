"""Numerical laboratory for loop-group factorization and harmonic maps.

Pipeline: a loop-valued holomorphic potential integrates to a complex
extended solution, whose pointwise Iwasawa splitting yields an extended
solution into the based unitary loop group; evaluation at lambda = -1 gives a
harmonic map into U(n). Gauge actions, uniton addition, Gauss bundles and
dressing transformations operate on top, each verified as a measured
numerical identity.
"""

from .errors import AdmissibilityError, ConfigError, FactorizationError, NumericalError
from .fields import GridSpec, LoopField, MapField, SubbundleField
from .loops import (LaurentLoop, adjoint_reality_defect, circle_sample,
                    coeff_recover, dft_roundtrip_defect, loop_distance,
                    loop_inverse, loop_mul)
from .matrices import (hermitian_projection, is_hermitian, is_projection,
                       is_unitary, kernel_frame, matrix_exp,
                       qr_unitary_positive, svd_image)
from .iwasawa import IwasawaFactorization, iwasawa_factorize
from .potentials import (FiniteTypePotential, FramePoly, GaugeMap, KernelData,
                         Potential, build_uniton_gauge, finite_type_potential,
                         flatness_residual, gauge_action, ker_minus_part,
                         plus_gauge, polynomial_potential, potential_from_json,
                         potential_to_json)
from .dpw import (ExtendedSolution, alpha_prime, extended_solution,
                  factorize_field, gauge_structure_defect, harmonic_map,
                  integrate_potential, verify_extended_solution, verify_harmonic)
from .grassmann import (add_uniton, basepoint_involution, cartan_embed,
                        cartan_invert, converse_uniton, derivative_identity_check,
                        gauss_bundle, gauss_bundle_iterate, morphism_kernel_bundle,
                        second_fundamental_forms, uniton_condition_check)
from .dressing import (SimpleFactor, completion_limit_experiment, dress_plus,
                       dress_simple, simple_factor_eval)

__version__ = "0.1.0"
