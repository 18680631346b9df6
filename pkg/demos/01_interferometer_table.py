"""
The interferometer on its own: Alice's four states and what Bob's detectors do.

For each (source, Alice bit, Bob bit) we print the detector probabilities.
Rounds where the bits differ always light the "wrong" detector (D2 for the
top source, D1 for the bottom one), so a click on the keep-detector means
the bits agree.
"""
from erasure_qkd.protocol import STATE_NAMES, SourcePort, alice_prepare, bob_settings, state_index
from erasure_qkd.quantum_core import apply_rotators, concurrence, detector_distribution

print(f"{'source':<10}{'state':<20}{'concurrence':>12}{'bob':>5}{'P(D1)':>8}{'P(D2)':>8}")
for source in SourcePort:
    for alice in (0, 1):
        state = alice_prepare(source, alice)
        name = STATE_NAMES[state_index(source, alice)]
        for bob in (0, 1):
            p1, p2 = detector_distribution(apply_rotators(state, bob_settings(bob)))
            print(f"{source.name:<10}{name:<20}{concurrence(state):>12.3f}{bob:>5}{p1:>8.3f}{p2:>8.3f}")
