from .splits import ManifestRecord, read_manifest, write_manifest, split_dataset
from .metrics import confusion_matrix, evaluate, EvalResult
from .robustness import robustness_sweep
from .significance import stuart_maxwell, stuart_maxwell_from_table, chi2_sf
from .tsne import tsne, write_embedding_csv, write_embedding_svg

__all__ = [
    "ManifestRecord", "read_manifest", "write_manifest", "split_dataset",
    "confusion_matrix", "evaluate", "EvalResult",
    "robustness_sweep",
    "stuart_maxwell", "stuart_maxwell_from_table", "chi2_sf",
    "tsne", "write_embedding_csv", "write_embedding_svg",
]
