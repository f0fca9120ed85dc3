"""Multi-class anomaly detection.

One-class detectors trained per normal category or pooled, combined by
evidence fusion or minimum center distance, with an ROC/AUC benchmark
harness and a CLI. Hot numeric kernels run through numba when available;
set MCAD_BACKEND=numpy to force the pure-numpy fallback.
"""

from .backend import active_backend
from .data import (
    Dataset,
    Split,
    SplitSpec,
    SyntheticSpec,
    enumerate_combinations,
    gen_gaussian_classes,
    load_csv,
    load_idx,
    save_csv,
    select_normal,
)
from .detectors import (
    Hyperparams,
    OneClassDetector,
    TrainingLog,
    calibrate_probability,
    compute_center,
    deepmad_finetune,
    deepmad_loss,
    load_detector,
    pretrain_autoencoder,
    save_detector,
    score,
    svdd_train,
)
from .evaluate import (
    AucSummary,
    BenchmarkPlan,
    BenchmarkResult,
    BenchRow,
    RocResult,
    auc_mannwhitney,
    ci95,
    lemma1_rates,
    roc_auc,
    run_benchmark,
)
from .fusion import (
    CombinedVerdict,
    FocalMass,
    aggregate_rates,
    ds_combine,
    ds_combine_bruteforce,
    min_distance_score,
    or_rule_decide,
)
from .multiclass import (
    MultiDetector,
    load_multi,
    predict_labels,
    predict_labels_all_reject,
    predict_scores,
    save_multi,
    train_algorithm1,
    train_algorithm2,
    train_deepmad,
)
from .nn import (
    AdamState,
    MlpGrads,
    MlpParams,
    adam_step,
    backward,
    finite_diff_gradcheck,
    init_adam,
    init_mlp,
    mlp_forward,
    mse_loss,
)

__version__ = "0.1.0"
