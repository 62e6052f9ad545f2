# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # The radio network and the three tracking modes
#
# The network model is a hard 1500 m disc per node, a seeded per-hop loss
# and serial airtime at 250 kbit/s.

# %%
from pathlib import Path

import numpy as np

from vtrack.pansim import ChannelModel, NodeSim, PanConfig, PanNetwork, airtime_s
from vtrack.scenario import load_scenario, run_scenario
from vtrack.station import link_check

print(airtime_s(100) * 1e3, "ms for 100 bytes")

# %% [markdown]
# Delivered fraction against distance, with 5% loss per hop.

# %%
for d in (500, 1000, 1500, 1501, 2000):
    net = PanNetwork(PanConfig(seed=d), ChannelModel(per_hop_loss_prob=0.05))
    net.add_node(NodeSim(1, (0.0, 0.0), "coordinator"))
    net.add_node(NodeSim(2, (float(d), 0.0), "end-device", 1))
    rep = link_check(net, 1, 2, n_frames=400)
    print(f"{d:5d} m  delivered {rep.delivered:3d}/400  {rep.reason or ''}")

# %% [markdown]
# A mesh relays around the range limit: routers forward, end-devices do not.

# %%
mesh = PanNetwork(PanConfig(topology="mesh"))
for i, x in enumerate(np.arange(0, 5000, 1200)):
    mesh.add_node(NodeSim(i + 1, (float(x), 0.0)))
print(mesh.route(1, 5))

# %% [markdown]
# ## Crowded area
#
# Three vehicles share a street while buildings cut every link for 30 s.
# Passive units only log, active units lose what they send during the
# blackout, and hybrid units hold it back and deliver it late.

# %%
scn_path = Path("scenarios/crowded_area.scn")
if not scn_path.exists():
    scn_path = Path(__file__).resolve().parent.parent / "scenarios" / "crowded_area.scn"
result = run_scenario(load_scenario(scn_path))
cols = ("vehicle", "mode", "samples", "sent", "delivered", "dropped", "dumped", "late_points")
print(" ".join(f"{c:>11}" for c in cols))
for row in result.stats_rows:
    print(" ".join(f"{row[c]!s:>11}" for c in cols))
