"""Classifiers: SMO-trained SVMs, a Fisher LDA scorer and the small LSTM."""
from .lda import LdaScorer, lda_score, train_lda
from .lstm import LstmModel, aggregate_window_scores, lstm_predict_subject, train_lstm
from .svm import SvmModel, svm_score, train_svm

__all__ = [
    "LdaScorer", "LstmModel", "SvmModel", "aggregate_window_scores", "lda_score",
    "lstm_predict_subject", "svm_score", "train_lda", "train_lstm", "train_svm",
]
