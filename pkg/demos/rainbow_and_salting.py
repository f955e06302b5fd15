# %% [markdown]
# # Rainbow tables, and why a salt defeats them
#
# A table set over lowercase passwords of 1-3 letters, the success rate it
# reaches, the cost of false alarms, and what happens once a salt is added.

# %%
import random
import string
import time

import numpy as np

from unattended.rainbow import (PlaintextSpace, TableParams, build_table, build_table_set, hash_bytes, lookup,
                                salted_lookup_demo)

params = TableParams(charset=string.ascii_lowercase, min_len=1, max_len=3,
                     chain_len=100, chain_count=2000, seed=1)
space = PlaintextSpace(params)
print("plaintext space:", space.size)

# %% [markdown]
# ## Coverage against the number of tables
#
# Merged chains are dropped when a table is built, so one table plateaus well
# below full coverage. Tables with different reduction functions cover
# mostly different plaintexts.

# %%
rng = random.Random(0)
sample = [space.plaintext(rng.randrange(space.size)) for _ in range(400)]
for count in (1, 2, 3):
    t0 = time.perf_counter()
    tables = build_table_set(params, count)
    built = time.perf_counter() - t0
    results = [lookup(tables, hash_bytes(w)) for w in sample]
    rate = np.mean([r.found for r in results])
    work = np.mean([r.work for r in results])
    alarms = np.mean([r.false_alarms for r in results])
    rows = sum(len(t.rows) for t in tables)
    print(f"{count} table(s): {rows:5} rows, built {built:.2f}s, success {rate:.3f}, "
          f"{work:.0f} hashes and {alarms:.1f} false alarms per lookup")

# %% [markdown]
# ## Chain length trade-off

# %%
for t in (25, 50, 100, 200):
    table = build_table(TableParams(charset=string.ascii_lowercase, min_len=1, max_len=3,
                                    chain_len=t, chain_count=200_000 // t, seed=1))
    rate = np.mean([lookup(table, hash_bytes(w)).found for w in sample])
    print(f"t={t:3}: {len(table.rows):5} rows, success {rate:.3f}")

# %% [markdown]
# ## Salting

# %%
tables = build_table_set(params, 2)
salted = sum(salted_lookup_demo(tables, w, rng.randbytes(8)).found for w in sample)
print(f"salted lookups that succeed: {salted}/{len(sample)}")
