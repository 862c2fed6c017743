import sys

from thermospike.cli import main

sys.exit(main())
