"""
CatArray - command-line entry point
Usage: python run.py <task> --config <path> [--out PATH] [--format csv|json]
"""
import logging
import sys

from config import settings

logging.basicConfig(
    level=logging.INFO if settings.DEBUG else logging.WARNING,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logging.captureWarnings(True)

if __name__ == "__main__":
    from api.cli import main
    sys.exit(main())
