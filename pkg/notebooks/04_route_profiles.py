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
# # Route profiles
#
# Speed is specified against distance along the route. Between two
# anchors the acceleration is constant, so the motion has a closed form.

# %%
import numpy as np

from vtrack.geo import distance_m
from vtrack.routegen import Route, RouteSpec

square = ((48.1153, 11.5137), (48.1193, 11.5137), (48.1193, 11.5197),
          (48.1153, 11.5197), (48.1153, 11.5137))
spec = RouteSpec(square, ((0, 0), (200, 14), (700, 6), (1500, 11)), rate_hz=2.0)
route = Route(spec)
print(f"{route.length_m:.1f} m in {route.duration_s:.1f} s")

# %%
prof = route.profile()
for k in range(0, len(prof), 60):
    print(f"t={prof.t[k]:6.1f}  s={prof.cumulative_distance_m[k]:7.1f}  "
          f"v={prof.speed_mps[k]:5.2f}  course={prof.course_deg[k]:6.1f}")

# %% [markdown]
# Two consistency checks: the distance column ends at the polyline length,
# and away from the points where the acceleration changes, its numerical
# derivative tracks the speed column.

# %%
polyline = sum(distance_m(*a, *b) for a, b in zip(square, square[1:]))
print("length error:", abs(prof.cumulative_distance_m[-1] - polyline) / polyline)

dt = 1 / spec.rate_hz
fd = np.gradient(prof.cumulative_distance_m, dt)
bps = np.array(route.breakpoints_s)
clear = np.array([np.all(np.abs(bps - t) >= dt) for t in prof.t])
err = np.abs(fd - prof.speed_mps)[clear] / prof.speed_mps[clear]
print(f"{clear.sum()} of {len(prof)} samples clear of breakpoints, max relative error {err.max():.2e}")

# %% [markdown]
# The NMEA stream a receiver on the route would emit.

# %%
for line in route.generate()[:4]:
    print(line, end="")
