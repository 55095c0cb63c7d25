from .data import (
    ConfusionMatrix,
    DataError,
    Dataset,
    Standardization,
    evaluate,
    stratified_split,
)
from .io import ModelIoError, load_model, save_model
from .mlp import DivergenceError, MlpError, MlpModel, loss_and_gradients, mlp_train
from .pca import PcaModel, pca_fit, pca_project, pca_reconstruct
from .svm import (
    KKT_TOLERANCE,
    SvmError,
    SvmModel,
    kkt_violation,
    platt_fit,
    platt_predict,
    scale_gamma,
    svm_train,
)
