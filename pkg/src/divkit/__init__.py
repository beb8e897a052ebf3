"""divkit: divergences between probability measures, and tools built on them.

Energy distances of general order, Fourier-based metrics, exact
Wasserstein solvers, whitening for scale invariance, classical
entropy/Fisher functionals on densities, a kinetic wealth-exchange
simulator instrumented with these divergences, and a model-comparison
benchmark.  Hot kernels run through a compiled extension when present
(``divkit._backend.backend_name()`` tells you which), with a pure
NumPy/Python fallback that matches it bit for bit.
"""

from ._backend import backend_name
from .core import (
    DivergenceReport,
    GridDensity,
    ReferenceDensity,
    SingularPairError,
    WeightedSampleSet,
    covariance,
    load_samples,
    moments,
    pairwise_power_sum,
    save_samples,
)
from .energy import (
    EnergyOrder,
    cramer,
    energy_gini_decomposition,
    energy_sq,
    gini_index,
    gini_l1,
    gini_t,
    gmd,
)
from .fourier import (
    FourierOrder,
    QuadratureSpec,
    c_alpha,
    char_fn,
    fourier_metric,
    required_matching_order,
)
from .infodiv import entropy, fisher, kl, relative_fisher
from .kinetics import (
    EnsembleState,
    TradeParams,
    equilibrium_density,
    initial_state,
    relaxation_trace,
    step,
    tail_index,
)
from .transport import (
    TransportPlan,
    check_w1_lower_bound,
    check_w1_upper_bound,
    wasserstein_1d,
    wasserstein_lp,
)
from .whitening import (
    WhiteningMap,
    apply_whitening,
    check_scale_stability,
    fit_whitening,
    whitened_divergence,
)

__version__ = "0.1.0"
