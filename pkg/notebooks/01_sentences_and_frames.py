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
# # GPS sentences and radio frames
#
# A tracking unit reads NMEA text from its GPS receiver and talks to the
# radio module through binary API frames. This notebook walks both codecs.

# %%
from vtrack import frame, nmea
from vtrack.errors import IntegrityError

gga = "$GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,*47"
rmc = "$GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W*6A"

# %% [markdown]
# The checksum is the XOR of every character between `$` and `*`.

# %%
body = gga[1:gga.index("*")]
print(f"{nmea.checksum(body):02X}")

# %% [markdown]
# A labelled dump, one row per field.

# %%
for label, value in nmea.describe(rmc):
    print(f"{label:>20}: {value}")

# %% [markdown]
# Typed values keep absent fields as `None`. Formatting them again
# gives back the original bytes.

# %%
g = nmea.parse_gga(nmea.parse(gga))
print(g)
assert nmea.format_gga(g).strip() == gga

# %%
try:
    nmea.parse(gga[:-1] + "8")
except IntegrityError as exc:
    print("rejected:", exc)

# %% [markdown]
# ## API frames
#
# Frame layout: delimiter `7E`, a big-endian length, the type byte, the data and a
# checksum. The escaped mode replaces the four reserved bytes so a bare
# `7E` only ever starts a frame.

# %%
tx = frame.build_tx(frame.TxRequest(0x0013A20040000001, b"\x7e\x11 hello"))
plain = frame.encode(tx)
escaped = frame.encode(tx, escaped=True)
print(plain.hex(" "))
print(escaped.hex(" "))

# %%
for label, value in frame.describe(frame.decode(escaped, escaped=True)[0]):
    print(f"{label:>16}: {value}")

# %% [markdown]
# A stream decoder survives noise and broken frames and picks up again
# at the next delimiter.

# %%
dec = frame.StreamDecoder()
noisy = b"\x00\x13" + plain[:-1] + b"\x00" + plain
print(len(dec.feed(noisy)), "frame(s)", dec.errors)
