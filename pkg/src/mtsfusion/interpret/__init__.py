from .attention import ham_heatmap, ham_train, nlha_attention, nlha_heatmap, nlha_train
from .dynamask import DynamaskConfig, dynamask_fit, dynamask_perturb, dynamask_population, fit_mask, trailing_mean
from .saliency import SaliencyMatrix, cell_fractions, emit_heatmap, slot_mean
from .tpi import normalize_drops, tpi_drops, tpi_scores
