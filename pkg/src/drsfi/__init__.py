"""drsfi: bit-flip robustness evaluation for deep recommendation models.

Build small DRS-style models, corrupt their parameters with random IEEE-754
bit flips at a configurable bit error rate, measure the output degradation
(RMSE, AUC-ROC), and evaluate mitigation schemes (ABFT checksums,
activation clipping, selective bit protection).
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .campaign import CampaignSpec, RunRecord, emit_results, parse_config, run_campaign
from .datagen import SyntheticBatch, gen_batch, gen_labeled, split_indices
from .inject import (
    ErrorMap,
    InjectionConfig,
    apply_error_map,
    build_error_map,
    flip_bit,
    load_error_map,
    save_error_map,
    sbp_mask,
)
from .metrics import RmseReport, RunAggregate, aggregate_runs, auc_roc, rmse_with_validity, sanitize_scores
from .mitigate import (
    AbftStatus,
    MitigationPolicy,
    abft_embedding,
    abft_gemm,
    augment_checksums,
    clip_activation,
)
from .model import (
    DummyModelConfig,
    ModelGraph,
    TrainConfig,
    build_ctr,
    build_dummy,
    forward_batch,
    forward_dummy,
    load_checkpoint,
    param_count,
    save_checkpoint,
    train_ctr,
)
from .tensor import Tensor, apply_activation, embedding_bag, fm_interaction, gemm

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "CampaignSpec",
    "RunRecord",
    "emit_results",
    "parse_config",
    "run_campaign",
    "SyntheticBatch",
    "gen_batch",
    "gen_labeled",
    "split_indices",
    "ErrorMap",
    "InjectionConfig",
    "apply_error_map",
    "build_error_map",
    "flip_bit",
    "load_error_map",
    "save_error_map",
    "sbp_mask",
    "RmseReport",
    "RunAggregate",
    "aggregate_runs",
    "auc_roc",
    "rmse_with_validity",
    "sanitize_scores",
    "AbftStatus",
    "MitigationPolicy",
    "abft_embedding",
    "abft_gemm",
    "augment_checksums",
    "clip_activation",
    "DummyModelConfig",
    "ModelGraph",
    "TrainConfig",
    "build_ctr",
    "build_dummy",
    "forward_batch",
    "forward_dummy",
    "load_checkpoint",
    "param_count",
    "save_checkpoint",
    "train_ctr",
    "Tensor",
    "apply_activation",
    "embedding_bag",
    "fm_interaction",
    "gemm",
    "__version__",
]
