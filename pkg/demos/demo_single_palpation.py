"""Palpate one TPU point and plot what the sensors saw.

Produces the classic single-point view: force vs displacement from the
end-effector sensor, and the contact-microphone spectrogram with the
damped resonance ridges of the material.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from palpbench.features import force_features, spectrogram
from palpbench.materials import table_material, uniform_phantom
from palpbench.rig import RigConfig, RigSimulator

phantom = uniform_phantom(table_material("tpu"), nx=20, ny=20, origin=(90.0, 90.0))
sim = RigSimulator(phantom, RigConfig(seed=4))

sim.move_to(100.0, 100.0)
record = sim.palpate(max_depth=2.0, force_limit=45.0)
ff = force_features(record.force_series)
print(f"palpated {record.material_name} at (100, 100)")
print(f"  stiffness        {ff.stiffness:8.4f} N/mm")
print(f"  displacement     {ff.max_displacement:8.4f} mm past contact")
print(f"  smoothness       {ff.smoothness:8.5f}")
print(f"  audio            {len(record.audio_left)} samples per mic at {record.sample_rate:.0f} Hz")

fig, (ax_f, ax_s) = plt.subplots(1, 2, figsize=(11, 4))

d, f = record.force_series[:, 0], record.force_series[:, 1]
peak = int(np.argmax(d))
ax_f.plot(d[: peak + 1], f[: peak + 1], label="loading")
ax_f.plot(d[peak:], f[peak:], label="unloading")
ax_f.set_xlabel("displacement (mm)")
ax_f.set_ylabel("force (N)")
ax_f.set_title(f"force vs displacement (k = {ff.stiffness:.2f} N/mm)")
ax_f.legend()

spec = spectrogram(record.audio_left, 1024, 512, record.sample_rate)
ax_s.imshow(
    spec.magnitudes_db.T,
    origin="lower",
    aspect="auto",
    extent=[spec.times_s[0], spec.times_s[-1], spec.freqs_hz[0], spec.freqs_hz[-1]],
    vmin=-80,
    vmax=0,
    cmap="magma",
)
ax_s.set_ylim(0, 4000)
ax_s.set_xlabel("time (s)")
ax_s.set_ylabel("frequency (Hz)")
ax_s.set_title("left contact microphone")

fig.tight_layout()
fig.savefig("demo_single_palpation.png", dpi=130)
print("wrote demo_single_palpation.png")
