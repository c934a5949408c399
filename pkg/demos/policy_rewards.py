"""Sequential acquisition on one image: rewards telescope to the total gain."""

from greedymask import CartesianMask, ReconConfig, RngPolicy
from greedymask.phantoms import PhantomSpec, generate_phantoms
from greedymask.policy import OneStepOracle, ZeroStepOracle, run_policy

x = generate_phantoms(PhantomSpec("shepp_logan", 16, 16), RngPolicy(1).generator("phantoms")).samples[0]
recon = ReconConfig("ista_wavelet", lam=1e-3, max_iters=20)
init = CartesianMask(16, 16, 1, ((0, 0),))

for policy in (ZeroStepOracle(), OneStepOracle()):
    ep = run_policy(policy, x, recon, "psnr", init, 5)
    rewards = [round(s.reward, 2) for s in ep.steps]
    print(f"{policy.name}: lines {[s.line[1] for s in ep.steps]} rewards {rewards}")
    print(f"  sum {sum(s.reward for s in ep.steps):.4f} == {ep.final_value - ep.initial_value:.4f}")
