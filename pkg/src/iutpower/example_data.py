"""Dose-finding example: two correlated lipid endpoints, placebo and three doses.

Values are reproduced at full printed precision.  ``DOSE`` holds the factor
labels of the original listing; ``DOSE_MG`` maps them to the doses.
"""
import numpy as np

from .models import Dataset

DOSE_MG = {"C": "C", "D1": "5", "D2": "20", "D3": "80"}

DOSE = ["C"] * 14 + ["D1"] * 13 + ["D2"] * 16 + ["D3"] * 12

ID = list(range(1, 15)) + list(range(1, 14)) + list(range(1, 17)) + list(range(1, 13))

Y1 = np.array([
    -1.8625535108138624, 29.34721445954974, -6.3137678199371745,
    19.216991496698075, 12.722266036754805, 20.212583500058351,
    47.051168090719933, 29.513349935229165, 41.257325613773325,
    40.311674165141952, 10.046388081418321, -2.4302074316664015,
    -65.455311923084153, 4.5832349984574563, 31.595255379770506,
    30.657963621804562, 0.37003117275409281, 24.931903758358956,
    -5.1985499511041766, -12.866678239093069, 43.345852071382282,
    -30.019570550674487, 48.327903190301356, 29.475745367759952,
    42.752922177181759, 10.865586982572303, 3.4014910331185852,
    -27.935908531021326, 56.258392730398057, 71.745137545619841,
    4.0627934257263867, 49.231849215308202, 77.910315891517342,
    67.957178491018084, 38.508391021819591, 7.5764451574917118,
    25.445762179701127, 34.676345429633706, 46.469474749409066,
    31.234807114436368, 34.110312373549867, 14.910507538569316,
    71.265170377673641, 81.850999642168176, 60.967424204246818,
    42.627748159404597, 100.92427663976426, 29.08846322726664,
    50.841679855994066, 30.542354253178686, 70.02927830323128,
    38.395066333967335, 5.9093304025316229, -13.78436594698357,
    70.033736413459621,
])

Y2 = np.array([
    -6.777903157821477, 2.0648837823842805, -10.462934365017302,
    14.464374322230817, -2.8380038403019383, 5.8629746208945486,
    3.9939864488029451, 11.949473688213379, 9.9168914824474044,
    15.3395483910324, -4.4397321627653135, -5.6984193139782686,
    -27.91928089342569, 3.3323913097447293, 25.638593326483246,
    27.873863464197768, 2.425097221381467, 8.1926929465386973,
    0.36143222132271902, -7.3254258964661609, 38.054568297829327,
    -0.58317649974408781, 28.139010340561498, 15.031853161767637,
    26.786147976118691, 20.311123560755199, 10.281829889850595,
    10.568567686223858, 42.488334296378078, 56.861102045669298,
    11.562887857471811, 39.913115453262265, 47.929874443514159,
    41.963539317444429, 32.314351990703244, 13.881355717862984,
    23.994996899563738, 34.886671412320652, 39.05634401238963,
    39.718487067123007, 27.372318355449433, 28.629904850643754,
    49.45732631086954, 55.666669246328759, 52.288259549103216,
    29.69764205753204, 70.926629561470435, 25.769983873247657,
    42.426852127674252, 29.209993771785896, 63.247320528419898,
    52.878939449964633, 30.626651541811189, 13.990906423494813,
    45.788680225436714,
])


def example_dataset(dose_labels: bool = True) -> Dataset:
    """The 55-row example as a :class:`Dataset` with endpoints EP1 and EP2.

    With ``dose_labels`` the treatment groups are named by dose in mg
    ("5", "20", "80"), which is how hypotheses are reported.
    """
    groups = [DOSE_MG[d] for d in DOSE] if dose_labels else list(DOSE)
    return Dataset(groups=groups, responses=np.column_stack([Y1, Y2]),
                   endpoint_names=("EP1", "EP2"), control="C")
