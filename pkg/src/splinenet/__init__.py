"""Neural networks with per-neuron learnable B-spline activations.

Provides the spline math, three layer families (node splines, fixed
activations, edge splines), manual backpropagation with a
finite-difference oracle, a training loop, dataset loaders, cost
accounting, and a benchmark CLI.
"""

from .analysis import (
    BudgetError,
    CostReport,
    build_matched,
    count_flops,
    count_params,
    matched_architectures,
    run_sweep,
)
from .backend import available_backends, backend_name
from .backprop import (
    GradientTape,
    backward,
    finite_diff_gradient,
    loss_grad_mse,
    max_relative_error,
    spline_activation_grad,
)
from .data import (
    DataError,
    Dataset,
    SymbolicTask,
    SYMBOLIC_TASKS,
    gen_symbolic,
    load_csv,
    load_idx,
    minmax_normalize,
    read_idx_images,
    read_idx_labels,
    split,
    write_idx_images,
    write_idx_labels,
)
from .network import (
    Architecture,
    ForwardTrace,
    KanEdgeLayer,
    LcnLayer,
    MlpLayer,
    Network,
    init_network,
    load_network,
    save_network,
)
from .splines import (
    BasisSupport,
    KnotVector,
    eval_basis,
    eval_basis_derivative,
    eval_basis_recursive,
    eval_nonzero_basis,
    eval_spline,
    find_span,
    make_knot_vector,
)
from .training import (
    AdamState,
    EpochMetrics,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    evaluate,
    grid_search,
    mse_loss,
    sgd_step,
    softmax_xent,
    softmax_xent_batch,
    train,
)

__version__ = "0.1.0"
