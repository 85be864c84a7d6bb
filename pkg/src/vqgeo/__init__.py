"""Loss-aware natural-gradient geometry for variational optimization.

Modules:
    numkit   -- dense linear algebra primitives, splittable RNG
    qsim     -- statevector simulation of the layered random ansatz
    qgt      -- block-diagonal quantum geometric tensor + noise + exact oracle
    metrics  -- loss-aware / conformal metric algebra, overlap tensors
    optim    -- quantum and Fisher-preconditioned classical update rules
    infogeo  -- executable exponential-family information geometry
    mlp      -- synthetic classification task for the classical optimizers
    bench    -- ensemble benchmark harness, statistics, persistence
    cli      -- the `vqgeo` command-line interface
"""

__version__ = "0.1.0"
