"""Stationary and dynamical time delay for 1D Schrodinger operators with steplike potentials."""
from ._jit import USING_JIT
from .potential import (ConfigError, Potential, PotentialError, load_potential_config,
                        make_custom, make_pure_step, make_smooth_step, make_step_plus_bump)
from .stationary import (CertificateError, EWMatrixPoint, GridError, ScatteringData,
                         SMatrixPoint, ThresholdError, ew_matrix, ew_matrix_at, jost_left,
                         jost_right, s_matrix_at, scattering_sweep, wronskian)
from .spectral import (AdmissiblePacket, PacketError, RepresentationError, SpatialState,
                       TwoChannelSpectral, apply_s, canonical_packet, make_admissible_packet,
                       scatter_state, to_in_representation, to_out_representation)
from .dynamics import (Quadrature, SojournCurve, evolve_full, evolve_in_free, evolve_out_free,
                       moller_minus, sojourn_times)
from .timedelay import (PlateauError, TimeDelayReport, build_report, divergence_coefficient,
                        ew_expectation, lr_decomposition, local_time_delays, plateau,
                        sigma_surrogates, translated_delay)

__version__ = "0.1.0"
