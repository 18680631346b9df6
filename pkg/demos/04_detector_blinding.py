"""
Detector blinding: Eve turns Bob's detectors into threshold devices and sends
bright pulses shaped so that the detector she wants fires only when Bob's
bit equals her guess.

Against the erasure protocol the pulse modes available to her still split
half the light whenever the interferometer does not interfere, so the QBER
stays at 1/3 and the attack is caught.
"""
from erasure_qkd.adversary import (
    BLINDING_MODES,
    BlindedDetectorModel,
    BlindingPulse,
    blinded_response,
)
from erasure_qkd.protocol import legal_states
from erasure_qkd.session import SessionConfig, run_session

model = BlindedDetectorModel(threshold=0.9)
states = legal_states()
print(f"{'guess (bit, source)':<24}{'pulse mode':<20}{'bob':>4}  {'routing (D1, D2)':<18}fires")
for (bit, source), mode in BLINDING_MODES.items():
    pulse = BlindingPulse(states[mode])
    for bob in (0, 1):
        routing = pulse.routing(bob)
        fired = blinded_response(pulse, bob, model)
        label = fired.name if fired is not None else "-"
        print(f"{f'({bit}, {source.name})':<24}{mode:<20}{bob:>4}  ({routing[0]:.2f}, {routing[1]:.2f})      {label}")

_, _, stats = run_session(SessionConfig(rounds=100_000, attack="blinding", seed=4))
print()
print(f"keep rate     {stats.keep_rate:.4f}")
print(f"no-click      {stats.no_click / stats.rounds:.4f}")
print(f"sifted QBER   {stats.sifted_qber:.4f}   (1/3)")
print(f"verdict       {stats.verdict.value}")
