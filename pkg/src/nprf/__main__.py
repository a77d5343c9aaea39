import sys

from nprf.cli import main

sys.exit(main())
