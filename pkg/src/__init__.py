"""
Módulo principal do tpschwarz
"""

__version__ = "1.0.0"
__author__ = "tpschwarz team"
__description__ = "Schwarz paralelo no tempo e análise espectral para controle ótimo parabólico"
