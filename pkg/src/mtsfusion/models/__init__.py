from .archs import ARCHITECTURES, FUSIONS, FHSINet, GRUNet, HAMNet, JHFNet, MLPNet, NLHANet, build_network
from .fusion import ConvergenceError, LateFusionModel, lfco_combine, lfco_fit, lflr_fit
from .layers import GRN, GRUCell, GRUSeq, StaticEmbedding, StaticEncoder, TensorBatch, embedding_dim, init_params
from .loss import BbceConfig, bbce, beta_from_labels
from .training import (
    DROPOUT_GRID,
    LR_GRID,
    WIDTH_GRID,
    EarlyStopper,
    Grids,
    HyperParams,
    TrainedModel,
    TrainingError,
    cv_scores,
    cv_select,
    single_grid,
    train,
)
