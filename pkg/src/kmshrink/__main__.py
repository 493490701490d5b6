import sys

from kmshrink.cli import main

sys.exit(main())
