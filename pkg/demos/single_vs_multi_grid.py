"""
Single versus multi models across size buckets
==============================================

A reduced version of ``qgat reproduce``: every model kind, both aggregation
modes, two size buckets. Raise ``samples`` and ``epochs`` for a fuller run.
"""

import tempfile

from qgat.experiments import grid_columns, read_grid, reproduce

out = tempfile.mkdtemp(prefix="qgat-grid-")
path = reproduce(out, buckets=(9, 16), samples=6, epochs=40, seed=0, log=print)

for row in read_grid(path):
    print(f"<= {row['max_atoms']} atoms")
    for col in grid_columns():
        if col.endswith("r2"):
            print(f"   {col[:-3]:<14s} r2 {row[col]:.4f}")
print("curves in", out)
