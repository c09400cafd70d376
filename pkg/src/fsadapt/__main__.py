import sys

from fsadapt.cli import main

sys.exit(main())
