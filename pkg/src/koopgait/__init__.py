"""Gait recognition with an invertible coupling autoencoder and per-cycle
Koopman operators: cycle segmentation, exactly invertible encoding,
operator estimation (iterative and closed form), operator-based
classification with interpretable weight maps, synthetic frame generation,
and an analytical FLOPs cost model."""

from .coder import (
    CouplingCoder,
    ETBlock,
    checkerboard_merge,
    checkerboard_split,
    coder_backward,
    decode,
    encode,
    et_apply,
    init_coder,
    load_coder,
    save_coder,
)
from .dataio import (
    SilhouetteSequence,
    SyntheticSpec,
    generate_synthetic_dataset,
    load_sequence,
    load_tensor,
    save_tensor,
)
from .koopman import (
    Spectrum,
    advance,
    convexity_probe,
    cycle_losses,
    fit_closed_form,
    fit_gradient_descent,
    fractional_power,
    spectrum,
)
from .ovs import (
    GaitCycle,
    SimilaritySeries,
    extract_cycles,
    find_segments,
    segment_sequence,
    select_benchmark,
    similarity,
)
from .training import TrainConfig, TrainTrace, fit_all_matrices, train_coder
from .classify import (
    ClassifierModel,
    export_weight_maps,
    fit_logreg,
    predict,
    rank1_accuracy,
)
from .flops import LayerSpec, fc_conv_ratio, fl_score, layer_flops, model_cost
from .synth import QualityReport, generate_future, image_metrics, interpolate

__version__ = "0.1.0"
