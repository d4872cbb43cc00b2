"""Numerical lab for constellations in the primes.

Modules: ``sieve`` (prime tables), ``wtrick`` (rescaling and weights),
``forms`` (linear forms averages), ``boxnorm`` (weighted box norms),
``measures`` (finite cylinder measures), ``constellations`` (exact counts),
``cli`` (command line).
"""

__version__ = "0.1.0"
