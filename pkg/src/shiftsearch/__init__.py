"""shiftsearch: find the image-transformation tuples a model is most
vulnerable to, and train classifiers hardened against them."""

__version__ = "0.1.0"

from .errors import (
    AdapterError,
    ConfigError,
    DatasetError,
    EvaluationError,
    ModelFormatError,
    ShiftSearchError,
    TrainingError,
)
from .mlp import Adam, MlpClassifier, load_model, save_model
from .oracle import (
    BuiltinOracle,
    ExternalOracle,
    LabeledDataset,
    Oracle,
    fitness,
    load_dataset,
    make_synthetic_dataset,
    predict_batch,
    synthetic_prototypes,
    transform_images,
    write_dataset,
)
from .png_io import read_png, write_png
from .robust_train import (
    AugmentationSet,
    EvalBudget,
    RobustnessReport,
    TrainConfig,
    TrainOutput,
    evaluate_robustness,
    train,
    train_step,
)
from .search import (
    DensityReport,
    EsConfig,
    SearchResult,
    crossover,
    density_report,
    evolution_search,
    mutate,
    random_search,
    select,
    write_density_csv,
)
from .transform_space import (
    IDENTITY,
    PRESET_NAMES,
    TransformInstance,
    TransformKind,
    TransformSet,
    TransformTuple,
    apply_tuple,
    load_transform_set,
    parse_tuple,
    preset_set,
    sample_tuple,
    search_space_size,
)
