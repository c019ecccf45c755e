"""CelebAMask-HQ 19-class label convention used by all mask-handling code.

Index 0 is background; the remaining ids follow the order the CelebAMask-HQ
annotation tooling emits.
"""

LABEL_NAMES = (
    "background",  # 0
    "skin",        # 1
    "nose",        # 2
    "eye_glasses", # 3
    "left_eye",    # 4
    "right_eye",   # 5
    "left_brow",   # 6
    "right_brow",  # 7
    "left_ear",    # 8
    "right_ear",   # 9
    "mouth",       # 10  (interior / teeth)
    "upper_lip",   # 11
    "lower_lip",   # 12
    "hair",        # 13
    "hat",         # 14
    "earring",     # 15
    "necklace",    # 16
    "neck",        # 17
    "cloth",       # 18
)

NUM_LABELS = len(LABEL_NAMES)  # 19

LIP_LABELS = (11, 12)
SKIN_LABELS = (1, 2)  # facial skin + nose
EYE_LABELS = (4, 5)

# Regions that never receive makeup: teeth/mouth interior, eyeballs, hair,
# background, neck, ears.
NEVER_TRANSFER_LABELS = (0, 4, 5, 8, 9, 10, 13, 17)
