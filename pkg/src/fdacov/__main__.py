import sys

from fdacov.cli import main

sys.exit(main())
