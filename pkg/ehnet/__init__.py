"""EHNet - convolutional-recurrent speech enhancement, trained with hand-derived gradients"""

__version__ = "0.3.0"
__author__ = "EHNet Team"
__email__ = "ehnet@example.com"
__description__ = "Spectrogram-domain speech enhancement with a conv + BiLSTM regression network"
