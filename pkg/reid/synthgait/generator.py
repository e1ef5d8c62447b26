"""
Synthetic runners as sequences of body-part label maps.

The figure is a 3-D stick model: x runs across the body (positive to the
figure's right), y points down and z points forward. A camera at view angle
``a`` sees screen x = x cos a + z sin a and depth = -x sin a + z cos a, so the
frontal view looks at the chest and the lateral view at the figure's left
side. Parts are painted back to front, which hides forearms that swing
behind the torso and keeps them labelled when they swing in front of it.
"""

import math

import cv2
import numpy as np

from partialgait import settings
from partialgait.exceptions import InvalidCanvas, InvalidConfig
from silhouettes.models import BodyPart, LabelMap

from .models import PERIOD_FRAMES, RANGES, IdentityParams

TOP_MARGIN = 8
SHOULDER_DROP = 2.0
SHOULDER_GAP = 2.0
ELBOW_FLEX = 0.4
FOREARM_INWARD = 0.6
KNEE_FLEX = 0.15
ARM_RADIUS = 2.0
THIGH_RADIUS = 3.0
SHIN_RADIUS = 2.5


def gen_identity(seed):
    rng = np.random.default_rng(seed)
    values = {name: float(rng.uniform(low, high)) for name, (low, high) in RANGES.items()}
    low, high = PERIOD_FRAMES
    values['period_frames'] = int(rng.integers(low, high + 1))
    return IdentityParams(**values)


def _pixel(value):
    return int(math.floor(value + 0.5))


class _Projector:

    def __init__(self, params, camera):
        self.cos = math.cos(camera.angle)
        self.sin = math.sin(camera.angle)
        self.scale = camera.scale
        self.cx = settings.CANVAS_WIDTH / 2
        self.y0 = TOP_MARGIN + camera.scale * 2 * params.head_radius

    def depth(self, point):
        x, _, z = point
        return -x * self.sin + z * self.cos

    def screen(self, point):
        x, y, z = point
        return self.cx + self.scale * (x * self.cos + z * self.sin), self.y0 + self.scale * y

    def radius(self, radius):
        return max(1, _pixel(radius * self.scale))


def _limbs(params, theta):
    """(label, start, end, radius) for all eight limb segments at phase ``theta``."""
    segments = []
    swing = math.sin(theta)
    for side in (-1, 1):
        # arms swing against the leg on the same side; left arm leads at theta = pi/2
        arm = -side * params.arm_amplitude * swing
        leg = side * params.leg_amplitude * swing

        shoulder = np.array([side * (params.torso_width / 2 + SHOULDER_GAP), SHOULDER_DROP, 0.0])
        elbow = shoulder + params.upper_arm * np.array([0.0, math.cos(arm), math.sin(arm)])
        forearm = np.array([
            -side * math.sin(FOREARM_INWARD),
            math.cos(arm + ELBOW_FLEX) * math.cos(FOREARM_INWARD),
            math.sin(arm + ELBOW_FLEX) * math.cos(FOREARM_INWARD),
        ])
        wrist = elbow + params.lower_arm * forearm

        hip = np.array([side * params.torso_width / 4, params.torso_height, 0.0])
        knee = hip + params.upper_leg * np.array([0.0, math.cos(leg), math.sin(leg)])
        ankle = knee + params.lower_leg * np.array(
            [0.0, math.cos(leg - KNEE_FLEX), math.sin(leg - KNEE_FLEX)])

        segments += [
            (BodyPart.UPPER_ARMS, shoulder, elbow, ARM_RADIUS),
            (BodyPart.LOWER_ARMS, elbow, wrist, ARM_RADIUS),
            (BodyPart.UPPER_LEGS, hip, knee, THIGH_RADIUS),
            (BodyPart.LOWER_LEGS, knee, ankle, SHIN_RADIUS),
        ]
    return segments


def _check_bounds(points, label):
    height, width = settings.CANVAS_HEIGHT, settings.CANVAS_WIDTH
    for x, y, r in points:
        if x - r < 0 or y - r < 0 or x + r > width - 1 or y + r > height - 1:
            raise InvalidCanvas(f'{label.name.lower()} leaves the {height}x{width} canvas',
                                part=label.name.lower())


def render_frame(params, camera, t):
    projector = _Projector(params, camera)
    phase = t % params.period_frames
    theta = params.cadence * phase + params.phase_offset
    canvas = np.zeros((settings.CANVAS_HEIGHT, settings.CANVAS_WIDTH), np.uint8)

    # (depth, paint order, label, draw) with the torso at depth zero
    parts = []
    half_width = (params.torso_width / 2 * abs(projector.cos)
                  + params.torso_width / 4 * abs(projector.sin))
    left, top = projector.screen((0.0, 0.0, 0.0))
    top_left = (_pixel(left - camera.scale * half_width), _pixel(top))
    bottom_right = (_pixel(left + camera.scale * half_width),
                    _pixel(top + camera.scale * params.torso_height))
    _check_bounds([(*top_left, 0), (*bottom_right, 0)], BodyPart.TORSO)
    parts.append((0.0, 0, BodyPart.TORSO,
                  lambda c: cv2.rectangle(c, top_left, bottom_right, int(BodyPart.TORSO), -1)))

    hx, hy = projector.screen((0.0, -params.head_radius, 0.0))
    head_centre, head_radius = (_pixel(hx), _pixel(hy)), projector.radius(params.head_radius)
    _check_bounds([(*head_centre, head_radius)], BodyPart.HEAD)
    parts.append((0.0, 1, BodyPart.HEAD,
                  lambda c: cv2.circle(c, head_centre, head_radius, int(BodyPart.HEAD), -1)))

    for order, (label, start, end, radius) in enumerate(_limbs(params, theta), start=2):
        a = tuple(_pixel(v) for v in projector.screen(start))
        b = tuple(_pixel(v) for v in projector.screen(end))
        r = projector.radius(radius)
        _check_bounds([(*a, r), (*b, r)], label)
        depth = (projector.depth(start) + projector.depth(end)) / 2

        def draw(c, a=a, b=b, r=r, value=int(label)):
            cv2.line(c, a, b, value, thickness=2 * r + 1)
            cv2.circle(c, a, r, value, -1)
            cv2.circle(c, b, r, value, -1)
        parts.append((depth, order, label, draw))

    for _, _, _, draw in sorted(parts, key=lambda part: (part[0], part[1])):
        draw(canvas)

    if camera.mirror:
        canvas = canvas[:, ::-1]
    if camera.dropout > 0:
        rng = np.random.default_rng([camera.seed, t])
        canvas = np.where(rng.random(canvas.shape) < camera.dropout, 0, canvas)
    return LabelMap(np.ascontiguousarray(canvas))


def render_sequence(params, camera, frames, start=0):
    if frames < 1:
        raise InvalidConfig('a sequence needs at least one frame')
    return [render_frame(params, camera, t) for t in range(start, start + frames)]
