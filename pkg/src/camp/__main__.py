import sys

from camp.bench.cli import main

sys.exit(main())
