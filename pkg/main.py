"""
Ponto de entrada principal do tpschwarz
"""

import sys

from src.cli import parse_and_dispatch


def main():
    """
    Função principal
    """
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
