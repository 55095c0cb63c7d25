"""Eye-to-hand calibration, with and without depth noise.

The laser probe marks the tool position at three Z levels over a 3x3 grid;
each spot is deprojected through the camera intrinsics and a similarity
transform is fit by SVD. Noiseless geometry recovers the ground-truth
extrinsics to machine precision; +/-1 mm depth fluctuation lands the
residual near half a millimeter.
"""

import numpy as np

from palpbench.calibration import run_calibration
from palpbench.materials import table_material, uniform_phantom
from palpbench.rig import RigConfig, RigSimulator, SensorModel

phantom = uniform_phantom(table_material("tpu"), nx=40, ny=40, cell_size=4.0, origin=(20.0, 20.0))

sim = RigSimulator(phantom, RigConfig(seed=0).with_ideal_sensors())
result, corr = run_calibration(sim, grid=(3, 3), z_levels=(0.0, 15.0, 30.0))
s_gt, r_gt, t_gt = sim.camera.ground_truth()
print(f"noiseless calibration over {len(corr)} laser points")
print(f"  residual       {result.residual_mean:.2e} mm")
print(f"  rotation error {np.abs(result.transform.R - r_gt).max():.2e}")
print(f"  position error {np.abs(result.transform.t - t_gt).max():.2e} mm")
print(f"  scale          {result.transform.s:.12f}")

noisy = SensorModel(
    force_noise_sd=0.0, adc_bits=None, lowpass_hz=None,
    audio_noise_floor=0.0, depth_noise_mm=1.0,
)
residuals = []
for seed in range(25):
    sim_n = RigSimulator(phantom, RigConfig(seed=seed, sensors=noisy))
    res_n, _ = run_calibration(sim_n, depth_source="probe")
    residuals.append(res_n.residual_mean)
print(f"\nwith +/-1 mm depth fluctuation ({len(residuals)} runs):")
print(f"  mean residual  {np.mean(residuals):.3f} +/- {np.std(residuals):.3f} mm")
