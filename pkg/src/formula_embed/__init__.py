"""Graph embeddings of first-order formulae for premise selection."""

from .dag import Direction, FormulaDag, build_dag, to_dot, to_json
from .nets import ModelConfig, NodeEmbedder, Pooling
from .syntax import FormulaAst, FormulaParseError, alpha_normalize, parse_sexpr, parse_tptp_fof
from .trainer import (
    Checkpoint,
    Dataset,
    Vocabulary,
    compile_formula,
    evaluate,
    generate_synthetic,
    load_checkpoint,
    load_dataset,
    rank_premises,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
