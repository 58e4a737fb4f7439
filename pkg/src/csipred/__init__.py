"""From-scratch CSI forecasting toolkit.

Four predictors over complex channel-gain time series: an Elman RNN, LSTM
and BiLSTM with hand-derived BPTT, an additive decomposable forecaster
(trend + Fourier seasonality + AR network), and a hybrid that corrects the
recurrent forecast with the additive model. Verified end to end on synthetic
multipath-fading data.
"""

__version__ = "0.1.0"
