"""bisamp: sampling-based uncertainty quantification for linear imaging
inverse problems (deblurring, inpainting) with a TV-plus-constraint prior.

Three samplers share one solver stack: RTO (perturb the data, re-solve a
MAP problem; independent samples), MYULA (proximal unadjusted Langevin on
an envelope-smoothed posterior; correlated chain), and a hierarchical
Gibbs sampler that wraps RTO and learns the noise precision and TV weight.
"""

from .core import ChainMeta, Image, Observation, RngStream, SampleChain, gaussian_vector
from .chainio import (
    ChainFormatError,
    ChainTruncatedError,
    load_chain,
    read_pgm,
    save_chain,
    write_pgm,
)
from .operators import (
    BlurOperator,
    DenseOperator,
    IdentityOperator,
    LinearOperator,
    MaskOperator,
    PowerIterationError,
    StackedOperator,
    apply,
    apply_adjoint,
    degrade,
    load_kernel,
    mask_from_image,
    operator_norm_sq,
    save_kernel,
    uniform_kernel,
)
from .regularizers import (
    GRAD_NORM_SQ_BOUND,
    GradientOperator,
    PriorSpec,
    grad_adjoint,
    grad_apply,
    moreau_envelope_grad,
    moreau_envelope_value,
    project_constraint,
    tv_norm,
)
from .solvers import (
    AdmmSettings,
    MapObjective,
    PdSettings,
    SolveStats,
    SolverError,
    admm_solve,
    tv_prox,
)
from .samplers import (
    GibbsSettings,
    MyulaSettings,
    RtoSettings,
    SamplerError,
    gamma_conditional_params,
    gibbs_sample,
    map_estimate,
    myula_defaults,
    myula_sample,
    myula_step_mean,
    rto_sample,
)
from .diagnostics import (
    AcfCurve,
    SummaryImages,
    acf,
    acf_values,
    fourier_directions,
    pixel_directions,
    psnr,
    ssim,
    summarize,
)
from .interval import (
    IntervalModel,
    RtoIntervalDensity,
    adaptive_simpson,
    rto_interval_density,
    smoothed_posterior_pdf,
    truncated_posterior_pdf,
)
from .phantom import phantom
from .config import ExperimentConfig, format_config, load_config_file, load_preset, preset_names
from .experiment import SamplerReport, compare_point_estimates, run_experiment

__version__ = "0.1.0"
