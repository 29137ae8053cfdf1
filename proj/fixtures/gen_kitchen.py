# Generates kitchen.sdf: python3 gen_kitchen.py [guard_height] > kitchen.sdf
import math, sys
G = float(sys.argv[1]) if len(sys.argv) > 1 else 0.07   # shelf guard height

def f(v): return ("%.6g" % v)
def vec(p): return " ".join(f(x) for x in p)
def pose(p, r=(0, 0, 0)): return vec((*p, *r))

def box(name, c, s):
    return f"""        <collision name="{name}">
          <pose>{pose(c)}</pose>
          <geometry><box><size>{vec(s)}</size></box></geometry>
        </collision>
"""

def link(name, p, cols="", r=(0, 0, 0)):
    return f"""      <link name="{name}">
        <pose>{pose(p, r)}</pose>
{cols}      </link>
"""

def joint(name, kind, parent, child, axis=None, lim=None):
    s = f'      <joint name="{name}" type="{kind}">\n        <parent>{parent}</parent>\n        <child>{child}</child>\n'
    if axis:
        s += f"        <axis>\n          <xyz>{vec(axis)}</xyz>\n"
        if lim:
            s += f"          <limit>\n            <lower>{f(lim[0])}</lower>\n            <upper>{f(lim[1])}</upper>\n            <velocity>{f(lim[2])}</velocity>\n          </limit>\n"
        s += "        </axis>\n"
    return s + "      </joint>\n"

def model(name, p, body, static=False, r=(0, 0, 0)):
    st = "      <static>true</static>\n" if static else ""
    return f"""    <model name="{name}">
      <pose>{pose(p, r)}</pose>
{st}{body}    </model>
"""

pi = math.pi
robot = (
    link("base_link", (0, 0, 0), box("base", (0, 0, 0.15), (0.6, 0.6, 0.3)) + box("mast", (-0.2, 0, 0.8), (0.1, 0.1, 1.0)))
    + link("base_laser_link", (0.25, 0, 0.33), box("laser", (0, 0, 0), (0.05, 0.05, 0.05)))
    + link("head_pan_link", (0, 0, 1.3))
    + link("head_tilt_link", (0, 0, 1.3), box("head", (-0.05, 0, 0), (0.1, 0.2, 0.1)))
    + link("head_camera_link", (0, 0, 1.3))
    + link("torso_lift_link", (0, 0, 0.3), box("torso", (-0.05, 0, 0.1), (0.2, 0.3, 0.2)))
    + link("shoulder_link", (0.1, 0, 0.45))
    + link("forearm_link", (0.1, 0, 0.45), box("forearm", (-0.1, 0, 0), (0.2, 0.06, 0.06)))
    + link("tool_frame", (0.28, 0, 0.45))
    + link("l_gripper_finger_link", (0.28, 0, 0.45), box("l_finger", (0, 0.005, 0), (0.04, 0.01, 0.03)))
    + link("r_gripper_finger_link", (0.28, 0, 0.45), box("r_finger", (0, -0.005, 0), (0.04, 0.01, 0.03)))
    + joint("base_laser_joint", "fixed", "base_link", "base_laser_link")
    + joint("head_pan_joint", "revolute", "base_link", "head_pan_link", (0, 0, 1), (-pi, pi, 4.0))
    + joint("head_tilt_joint", "revolute", "head_pan_link", "head_tilt_link", (0, 1, 0), (-0.5, 1.4, 4.0))
    + joint("head_camera_joint", "fixed", "head_tilt_link", "head_camera_link")
    + joint("torso_lift_joint", "prismatic", "base_link", "torso_lift_link", (0, 0, 1), (0, 0.7, 1.0))
    + joint("shoulder_pan_joint", "revolute", "torso_lift_link", "shoulder_link", (0, 0, 1), (-2.6, 2.6, 3.0))
    + joint("arm_extend_joint", "prismatic", "shoulder_link", "forearm_link", (1, 0, 0), (0.2, 1.0, 1.0))
    + joint("tool_joint", "fixed", "forearm_link", "tool_frame")
    + joint("l_gripper_finger_joint", "prismatic", "tool_frame", "l_gripper_finger_link", (0, 1, 0), (0, 0.04, 0.04))
    + joint("r_gripper_finger_joint", "prismatic", "tool_frame", "r_gripper_finger_link", (0, -1, 0), (0, 0.04, 0.04))
)

g = G
door = (box("panel", (-0.025, -0.35, 0.925), (0.05, 0.7, 1.75))
        + box("shelf", (0.06, -0.35, 0.49), (0.12, 0.6, 0.02))
        + box("guard", (0.115, -0.35, 0.5 + g / 2), (0.01, 0.6, g))
        + box("cap_hinge", (0.06, -0.055, 0.5 + g / 2), (0.12, 0.01, g))
        + box("cap_free", (0.06, -0.645, 0.5 + g / 2), (0.12, 0.01, g)))
fridge = (link("body", (0, 0, 0), box("cabinet", (0.35, 0, 0.9), (0.7, 0.7, 1.8)))
          + link("door", (0, 0.35, 0), door)
          + joint("door_hinge", "revolute", "body", "door", (0, 0, -1), (0, 1.6, 1.0)))

drawer = (box("bottom", (0.25, 0, -0.08), (0.5, 0.5, 0.02))
          + box("front", (-0.01, 0, 0), (0.02, 0.5, 0.18))
          + box("back", (0.49, 0, 0), (0.02, 0.5, 0.18))
          + box("left", (0.25, 0.24, 0), (0.5, 0.02, 0.18))
          + box("right", (0.25, -0.24, 0), (0.5, 0.02, 0.18)))
cabinet = (link("carcass", (0, 0, 0), box("top", (0, 0, 0.79), (0.6, 0.6, 0.02)) + box("plinth", (0, 0, 0.2), (0.6, 0.6, 0.4)))
           + link("drawer", (-0.3, 0, 0.6), drawer)
           + joint("drawer_joint", "prismatic", "carcass", "drawer", (-1, 0, 0), (0, 0.4, 0.5)))

bin_shell = (box("bottom", (0, 0, 0.005), (0.15, 0.15, 0.01))
             + box("wall_n", (0, 0.07, 0.06), (0.15, 0.01, 0.12))
             + box("wall_s", (0, -0.07, 0.06), (0.15, 0.01, 0.12))
             + box("wall_e", (0.07, 0, 0.06), (0.01, 0.13, 0.12))
             + box("wall_w", (-0.07, 0, 0.06), (0.01, 0.13, 0.12)))

walls = link("panels", (0, 0, 0), box("back", (0.75, 0, 1.1), (0.1, 6.0, 2.2))
             + box("partition", (-0.85, -1.05, 1.0), (0.1, 0.7, 2.0)))

out = f"""<?xml version="1.0"?>
<sdf version="1.7">
  <world name="kitchen">
    <gravity>0 0 -9.81</gravity>
{model("pr2", (-1.2, 1.0, 0), robot)}{model("fridge", (0, 0, 0), fridge)}{model("milk", (-0.35, 0.29, 0.6), link("box", (0,0,0), box("carton", (0, 0, 0), (0.06, 0.06, 0.2))))}{model("counter", (-2.3, -0.6, 0), link("top", (0,0,0), box("block", (0, 0, 0.45), (0.6, 1.2, 0.9))), static=True)}{model("table", (-2.1, 1.9, 0), link("top", (0,0,0), box("block", (0, 0, 0.375), (0.8, 0.8, 0.75))), static=True)}{model("cabinet", (0.4, -1.8, 0), cabinet)}{model("trash_bin", (0.35, -1.8, 0.53), link("bin", (0,0,0), bin_shell))}{model("walls", (0, 0, 0), walls, static=True)}  </world>
</sdf>
"""
sys.stdout.write(out)
