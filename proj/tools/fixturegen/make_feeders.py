"""Regenerates the sample feeders in data/feeders from per-mile line configurations."""
import pathlib

CONFIGS = {  # ohm/mile, lower triangle keyed by phase pair
    "601": {"aa": 0.3465+1.0179j, "ab": 0.1560+0.5017j, "ac": 0.1580+0.4236j,
            "bb": 0.3375+1.0478j, "bc": 0.1535+0.3849j, "cc": 0.3414+1.0348j},
    "602": {"aa": 0.7526+1.1814j, "ab": 0.1580+0.4236j, "ac": 0.1560+0.5017j,
            "bb": 0.7475+1.1983j, "bc": 0.1535+0.3849j, "cc": 0.7436+1.2112j},
    "603": {"bb": 1.3294+1.3471j, "bc": 0.2066+0.4591j, "cc": 1.3238+1.3569j},
    "604": {"aa": 1.3238+1.3569j, "ac": 0.2066+0.4591j, "cc": 1.3294+1.3471j},
    "605": {"cc": 1.3292+1.3475j},
    "606": {"aa": 0.7982+0.4463j, "ab": 0.3192+0.0328j, "ac": 0.2849-0.0143j,
            "bb": 0.7891+0.4041j, "bc": 0.3192+0.0328j, "cc": 0.7982+0.4463j},
    "607": {"aa": 1.3425+0.5124j},
}


def z(v):
    return f"{v.real:.6f}{'+' if v.imag >= 0 else '-'}j{abs(v.imag):.6f}"


def branch(frm, to, phases, config, feet, amps="-"):
    cfg = CONFIGS[config]
    miles = feet / 5280.0
    terms = []
    for r, pr in enumerate(phases):
        for pc in phases[: r + 1]:
            terms.append(z(cfg["".join(sorted(pc + pr))] * miles))
    return f"{frm} {to} {phases} {amps} " + " ".join(terms)


def write(name, header, buses, branches, loads, dgs=()):
    lines = [f"# {header}", "[bases]", "power_va 1e6", "voltage_v mv 2401.777", "units physical", "", "[bus]"]
    lines += buses + ["", "[branch]"] + branches + ["", "[load]"]
    lines += [f"{b} {p} {kw} {kvar} 2.0 2.0" for b, p, kw, kvar in loads]
    if dgs:
        lines += ["", "[dg]"] + [f"{b} {p} {kw} {kva}" for b, p, kw, kva in dgs]
    path = pathlib.Path(__file__).resolve().parents[2] / "data" / "feeders" / name
    path.write_text("\n".join(lines) + "\n")


four_buses = ["1 abc mv substation", "2 abc mv", "3 abc mv", "4 a mv"]
four_branches = [branch(1, 2, "abc", "601", 2000, "600"), branch(2, 3, "abc", "602", 2500, "400"),
                 branch(3, 4, "a", "607", 1500)]
four_loads = [(2, "a", 150, 70), (2, "b", 110, 55), (2, "c", 180, 90),
              (3, "a", 120, 60), (3, "b", 70, 30), (3, "c", 100, 50), (4, "a", 90, 40)]
write("4bus.feeder", "4-bus unbalanced chain with a single-phase lateral", four_buses, four_branches, four_loads)
write("4bus_dg.feeder", "4-bus unbalanced chain with one single-phase DG at the lateral end",
      four_buses, four_branches, four_loads, [(4, "a", 60, 72)])

ieee_buses = ["650 abc mv substation", "632 abc mv", "633 abc mv", "634 abc mv", "645 bc mv", "646 bc mv",
              "671 abc mv", "680 abc mv", "684 ac mv", "611 c mv", "652 a mv", "692 abc mv", "675 abc mv"]
ieee_branches = [
    branch(650, 632, "abc", "601", 2000, "730"), branch(632, 633, "abc", "602", 500, "400"),
    branch(633, 634, "abc", "602", 100, "400"), branch(632, 645, "bc", "603", 500, "230"),
    branch(645, 646, "bc", "603", 300, "230"), branch(632, 671, "abc", "601", 2000, "730"),
    branch(671, 680, "abc", "601", 1000), branch(671, 684, "ac", "604", 300, "230"),
    branch(684, 611, "c", "605", 300, "230"), branch(684, 652, "a", "607", 800, "230"),
    branch(671, 692, "abc", "606", 50), branch(692, 675, "abc", "606", 500, "400"),
]
SCALE = 0.3
base_loads = [(634, "a", 160, 110), (634, "b", 120, 90), (634, "c", 120, 90), (645, "b", 170, 125),
              (646, "b", 230, 132), (652, "a", 128, 86), (671, "a", 402, 230), (671, "b", 451, 258),
              (671, "c", 502, 288), (675, "a", 485, 190), (675, "b", 68, 60), (675, "c", 290, 212),
              (692, "c", 170, 151), (611, "c", 170, 80)]
ieee_loads = [(b, p, round(kw * SCALE, 3), round(kvar * SCALE, 3)) for b, p, kw, kvar in base_loads]
write("ieee13.feeder", "13-bus unbalanced feeder on IEEE 13-node line data; regulator, transformer and switch "
      "modelled as lines, loads wye-connected and scaled to 30%", ieee_buses, ieee_branches, ieee_loads)
write("ieee13_dg.feeder", "ieee13.feeder with single-phase inverters at five load buses",
      ieee_buses, ieee_branches, ieee_loads,
      [(634, "a", 40, 48), (646, "b", 40, 48), (675, "a", 40, 48), (675, "c", 40, 48), (611, "c", 40, 48)])

three_buses = ["s abc mv substation", "m abc mv", "e abc mv"]
def symmetric(frm, to, feet):
    miles = feet / 5280.0
    d, o = (0.4 + 0.8j) * miles, (0.1 + 0.3j) * miles
    return f"{frm} {to} abc - {z(d)} {z(o)} {z(d)} {z(o)} {z(o)} {z(d)}"
write("balanced3.feeder", "balanced 3-bus feeder with a symmetric impedance matrix",
      three_buses, [symmetric("s", "m", 3000), symmetric("m", "e", 3000)],
      [(b, p, 300, 120) for b in ("m", "e") for p in "abc"])
