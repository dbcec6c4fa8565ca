"""Steiner-point prediction toolkit.

Predicts rectilinear Steiner minimal trees by classifying Hanan-grid nodes
with a small graph attention network, and evaluates predictions against an
in-package exact oracle.
"""

from .data import (
    LabeledNet,
    NetRecord,
    generate_dataset,
    label_dataset,
    load_checkpoint,
    load_dataset,
    random_net,
    save_checkpoint,
    save_dataset,
)
from .evaluation import (
    ConfusionCounts,
    EvalReport,
    confusion_counts,
    evaluate,
    net_accuracy,
    outlier_count,
)
from .gat import (
    AttentionCoefficients,
    ForwardCache,
    GatLayerParams,
    Gradients,
    ModelParams,
    attention_coefficients,
    init_params,
    model_backward,
    model_forward,
)
from .nets import (
    BatchGraph,
    HananGrid,
    Net,
    NodeKind,
    Point,
    build_hanan_grid,
    disjoint_batch,
    normalize_features,
)
from .predictor import (
    SteinerPrediction,
    predict_steiner,
    predict_steiner_batch,
    refine,
    route_prediction,
)
from .rsmt import (
    OracleSolution,
    PointKind,
    RoutedTree,
    exact_rsmt,
    kruskal_mst,
    l1_distance,
    tree_degrees,
)
from .training import (
    AdamState,
    LossConfig,
    TrainConfig,
    adam_step,
    bfl_loss,
    l2_penalty,
    split_dataset,
    train,
)

__version__ = "0.1.0"
