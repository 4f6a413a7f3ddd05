import sys

from knnkl.cli import main

sys.exit(main())
