"""plastica: a desk-scale continual-learning plasticity laboratory.

Dense networks with exact manual backprop, task-stream generators, plasticity
interventions, diagnostics, and numerical checks of the trainability theory.
"""

__version__ = "0.1.0"

from .nn import (  # noqa: F401
    AlphaLinearized, CReLU, EngineError, Fourier, ForwardTrace, Gradients,
    Identity, LayerSpec, LeakyReLU, Network, ReLU, Sin,
    LAYERNORM, LINEARIZED_LAYERNORM, SOFTMAX_CROSS_ENTROPY, SQUARED_ERROR,
    apply_activation, backward, build_mlp, forward, init_network,
    loss_and_grad, product_matrix,
)
from .optim import (  # noqa: F401
    ADAM, SGD, L2Init, L2Zero, NoIntervention, OptimizerConfig, OptimizerState,
    ReDO, ShrinkPerturb, Spectral, optimizer_step, redo_reset, regularizer_grad,
    shrink_and_perturb, spectral_penalty,
)
from .metrics import (  # noqa: F401
    MetricsRecord, accuracy, binary_entropy, min_singular_value, param_l2,
    positive_fraction, spectral_norm, unit_sign_entropy,
)
from .streams import (  # noqa: F401
    Batch, Dataset, IdxBadMagic, IdxCountMismatch, IdxError, IdxTruncated,
    TaskStream, batches, class_incremental_stream, label_noise_stream,
    load_idx, make_blob_dataset, make_linearly_separable_subset,
    pixel_permutation_stream, probe_accuracy, random_label_stream,
)
from .theory import (  # noqa: F401
    FOURIER_LINEARITY_CONSTANT, Thm1Config, VerificationReport, gap_bound,
    sweep_lemma_checks, verify_fourier_linearity, verify_lemma_equality,
    verify_lemma_nonzero, verify_theorem1,
)
from .config import ExperimentConfig, load_config  # noqa: F401
from .runner import RunLog, aggregate, run_experiment, run_single_seed  # noqa: F401
from .svgplot import emit_plots  # noqa: F401
