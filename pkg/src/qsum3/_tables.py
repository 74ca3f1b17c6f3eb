# Shared lookup tables. Integer codes:
#   states:   0=|0>, 1=|1>, 2=|+>, 3=|->   (basis = code >> 1, bit = code & 1)
#   outcomes: 0=phi+, 1=phi-, 2=psi+, 3=psi-
#   announcements: outcome code for a direct publication, SUMMATION otherwise

SUMMATION = 4
NO_OUTCOME = -1

# BELL_QUARTERS[4*s1 + s2][k] = 4 * |<bell_k| s1 s2>|^2
BELL_QUARTERS = (
    (2, 2, 0, 0),  # |0>|0> = (phi+ + phi-)/sqrt2
    (0, 0, 2, 2),  # |0>|1> = (psi+ + psi-)/sqrt2
    (1, 1, 1, 1),
    (1, 1, 1, 1),
    (0, 0, 2, 2),  # |1>|0> = (psi+ - psi-)/sqrt2
    (2, 2, 0, 0),  # |1>|1> = (phi+ - phi-)/sqrt2
    (1, 1, 1, 1),
    (1, 1, 1, 1),
    (1, 1, 1, 1),
    (1, 1, 1, 1),
    (2, 0, 2, 0),  # |+>|+> = (phi+ + psi+)/sqrt2
    (0, 2, 0, 2),  # |+>|-> = (phi- + psi-)/sqrt2
    (1, 1, 1, 1),
    (1, 1, 1, 1),
    (0, 2, 0, 2),  # |->|+> = (phi- - psi-)/sqrt2
    (2, 0, 2, 0),  # |->|-> = (phi+ - psi+)/sqrt2
)
