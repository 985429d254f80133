#!/usr/bin/env python

from semsmooth.cli import main


main()
