from .embeddings import Vocabulary, load_embeddings  # noqa: F401
from .losses import LossKind, batch_loss, cross_entropy_soft, kl_divergence_loss  # noqa: F401
from .metrics import evaluate_run  # noqa: F401
from .runspec import RunSpec, grid_cells  # noqa: F401
from .smoothing import (  # noqa: F401
    SmoothingConfig,
    SynonymLexicon,
    build_target_distribution,
    inspect_distribution,
    precompute_target_table,
)
from .subcommands.train import train_run  # noqa: F401
from .version import __version__  # noqa: F401
