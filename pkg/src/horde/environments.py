"""Transition sources and the excursion protocol.

ChainEnv is the 7-state random walk used to validate the MSPBE estimators
against exact values: two absorbing ends, deterministic moves, episodes
start in the middle, reward 1.0 only on entering the right terminal.

PenSimEnv is a simulated stand-in for a small holonomic robot confined to
a two-meter square pen, driven by five discrete actions at a 100 ms tick.
It emits 53 synthetic sensors, all scaled to [0, 1], grouped like a real
sensorimotor stack (proximity, light, magnetic, inertial, per-motor
electrical, battery).  Every sensor is a documented deterministic function
of the pose/velocity state plus bounded Gaussian noise, so predictions
about them are learnable and their variances are nonzero.

The pen is not static: the lamp and the IR beacon breathe slowly (distinct
multi-minute periods), the ambient temperature field oscillates, and the
battery drains visibly over a long run.  Real sensor streams drift this way
over hours, and the drift matters: it gives the returns of
motion-independent sensors genuine variance.

On top of the slow drift, every sensor carries a fast low-amplitude
shimmer (two incommensurate sub-second sinusoids with per-sensor phases,
the way cheap ADCs pick up supply ripple and motor EMI).  The shimmer is
load-bearing for off-policy stability: it walks each reading across
several tile boundaries within any couple of seconds, so eligibility
mass deposited a few steps ago no longer lies under the current active
features.  Without it, a robot sitting still presents the learners with a
frozen self-loop, and importance-weighted traces compound geometrically
along long repeated-action runs (rho * gamma * lambda exceeds 1 for the
sticky behaviour policy at gamma = 0.8, lambda = 0.9).

Sensor map (index: meaning):
    0-7    ir_reflect: wall proximity 1 - d/1m along 8 body bearings
           (heading + k*45deg), saturating at 1 against a wall
    8-11   light: directional visible-light readings of a lamp at (2, 2),
           intensity gain(t)/(1+d^2), lobe cos(bearing difference)
    12-15  ir_light: same form for an IR beacon at the charger (0, 1)
    16-18  mag: (cos h + 1)/2, (sin h + 1)/2, and a field anomaly near the
           (0, 0) corner
    19     heat_ambient: spatial temperature gradient across the pen
    20     heat_internal: slow state tracking mean motor current
    21-23  accel_x (forward accel), accel_y (centripetal v*omega), rot_vel
    24-26  motor_velocity per omni wheel (tangential speeds)
    27-29  motor_current per wheel: command/actual mismatch + load + stall
    30-32  motor_temp per wheel: slow integrator of current
    33-35  motor_voltage per wheel: battery sag minus resistive drop
    36-37  battery_a, battery_b: slowly declining charge with load dip
    38-41  ir_distance: long-range proximity 1 - d/2m at 4 diagonal bearings
    42     bump: 1.0 while pushed against a wall
    43     speed_abs, 44 speed_signed
    45-46  odometry x/2, y/2
    47     dist_center (normalized), 48 angle_to_center (body frame)
    49     accel_mag
    50     charger_prox
    51     bump_trace: decaying average of bump
    52     light_total: mean of the four light sensors

The excursion scheduler interleaves three phases: LEARN (behaviour policy,
learners update), TEST (one constant-action policy for exactly test_steps
ticks, learning suspended), RECENTER (a proportional controller drives to
the pen centre for recenter_steps ticks, learning suspended).  TEST entry
is geometric: each LEARN tick starts an excursion with probability
1/mean_interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, LogParseError, ProtocolError
from .policies import DEFAULT_ACTIONS

__all__ = [
    "ChainEnv",
    "PenSimEnv",
    "RecenterController",
    "Phase",
    "ExcursionSchedule",
    "Scheduler",
    "PhaseInfo",
    "LogWriter",
    "LogReplay",
    "SENSOR_COUNT",
]

SENSOR_COUNT = 53


class ChainEnv:
    """Seven positions 0..6; 0 and 6 absorb; episodes start at 3.

    Actions are 0 = left, 1 = right.  Feature lookups use position - 1
    (the five non-terminal states)."""

    N_POSITIONS = 7
    START = 3

    def __init__(self):
        self.position = self.START
        self.episode_steps = 0

    def reset(self) -> int:
        self.position = self.START
        self.episode_steps = 0
        return self.position

    @property
    def terminal(self) -> bool:
        return self.position in (0, 6)

    def step(self, action: int) -> tuple[int, float, bool]:
        """Returns (next position, reward, terminal)."""
        if self.terminal:
            raise ProtocolError("step() called on an absorbing state; reset() first")
        if action not in (0, 1):
            raise ProtocolError(f"chain action must be 0 (left) or 1 (right), got {action}")
        nxt = self.position + (1 if action == 1 else -1)
        reward = 1.0 if nxt == 6 else 0.0
        self.position = nxt
        self.episode_steps += 1
        return nxt, reward, self.terminal


# pen kinematics constants (SI units, 100 ms tick)
PEN_SIZE = 2.0
DT = 0.1
SPEED_CMD = 0.5
TURN_CMD = 2.0
MOTOR_RESPONSE = 0.5
WHEEL_RADIUS_ARM = 0.15
# ambient drift: periods in ticks, chosen incommensurate
LAMP_PERIOD = 2300.0
BEACON_PERIOD = 1700.0
HEAT_PERIOD = 4100.0
BATTERY_DRAIN = 2e-6
# fast shimmer on every sensor (supply ripple / EMI):
SHIMMER_AMPLITUDE = 0.05
_SHIMMER_W1 = 2 * math.pi / 7.3
_SHIMMER_W2 = 2 * math.pi / 12.1
_SHIMMER_PHASE1 = 2 * math.pi * (np.arange(SENSOR_COUNT) * 0.61803) % (2 * math.pi)
_SHIMMER_PHASE2 = 2 * math.pi * (np.arange(SENSOR_COUNT) * 0.25487) % (2 * math.pi)
_WHEEL_ANGLES = np.array([0.5 * math.pi, 0.5 * math.pi + 2 * math.pi / 3, 0.5 * math.pi + 4 * math.pi / 3])
_LAMP = np.array([2.0, 2.0])
_BEACON = np.array([0.0, 1.0])
_RAY_BEARINGS = np.arange(8) * (math.pi / 4)
_LIGHT_BEARINGS = np.arange(4) * (math.pi / 2)
_DIAG_BEARINGS = math.pi / 4 + np.arange(4) * (math.pi / 2)


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _wall_distances(x: float, y: float, angles: np.ndarray) -> np.ndarray:
    """Distance from (x, y) to the pen boundary along each absolute angle."""
    c = np.cos(angles)
    s = np.sin(angles)
    t = np.full(angles.shape, np.inf)
    with np.errstate(divide="ignore"):
        tx = np.where(c > 1e-12, (PEN_SIZE - x) / c, np.where(c < -1e-12, -x / c, np.inf))
        ty = np.where(s > 1e-12, (PEN_SIZE - y) / s, np.where(s < -1e-12, -y / s, np.inf))
    np.minimum(tx, ty, out=t)
    return np.clip(t, 0.0, None)


class PenSimEnv:
    """Simulated holonomic robot in a 2 m x 2 m pen; see the module docstring
    for the sensor table.  Deterministic given the seed; walls clamp motion."""

    n_actions = len(DEFAULT_ACTIONS)

    def __init__(self, seed: int = 0, sensor_noise: float = 0.01):
        self._rng = np.random.default_rng(seed)
        self.sensor_noise = float(sensor_noise)
        self.reset()

    def reset(self) -> np.ndarray:
        self.x = 1.0
        self.y = 1.0
        self.heading = 0.0
        self.v = 0.0
        self.omega = 0.0
        self._accel_v = 0.0
        self._accel_omega = 0.0
        self.bump = 0.0
        self._bump_trace = 0.0
        self._battery = 0.95
        self._heat = 0.0
        self._motor_temp = np.zeros(3)
        self._currents = np.zeros(3)
        self._wheel_speeds = np.zeros(3)
        self._step_count = 0
        return self.observe()

    @property
    def pose(self) -> tuple[float, float, float]:
        return self.x, self.y, self.heading

    def step(self, action: int) -> np.ndarray:
        if not 0 <= action < self.n_actions:
            raise ProtocolError(f"action {action} outside the 5-action set")
        v_cmd = {0: SPEED_CMD, 1: -SPEED_CMD}.get(action, 0.0)
        w_cmd = {2: -TURN_CMD, 3: TURN_CMD}.get(action, 0.0)

        v_prev, w_prev = self.v, self.omega
        self.v += MOTOR_RESPONSE * (v_cmd - self.v)
        self.omega += MOTOR_RESPONSE * (w_cmd - self.omega)
        self.heading = _wrap_angle(self.heading + self.omega * DT)
        nx = self.x + self.v * math.cos(self.heading) * DT
        ny = self.y + self.v * math.sin(self.heading) * DT
        bumped = not (0.0 <= nx <= PEN_SIZE and 0.0 <= ny <= PEN_SIZE)
        self.x = min(max(nx, 0.0), PEN_SIZE)
        self.y = min(max(ny, 0.0), PEN_SIZE)
        self.bump = 1.0 if bumped else 0.0
        self._bump_trace = 0.9 * self._bump_trace + 0.1 * self.bump
        self._accel_v = (self.v - v_prev) / DT
        self._accel_omega = (self.omega - w_prev) / DT

        # wheel-level electrical model
        s_actual = -np.sin(_WHEEL_ANGLES) * self.v + WHEEL_RADIUS_ARM * self.omega
        s_cmd = -np.sin(_WHEEL_ANGLES) * v_cmd + WHEEL_RADIUS_ARM * w_cmd
        self._wheel_speeds = s_actual
        self._currents = (
            0.8 * np.abs(s_cmd - s_actual) + 0.1 * np.abs(s_actual) + 0.3 * self.bump
        )
        load = float(self._currents.mean())
        self._heat += 0.02 * (load - self._heat)
        self._motor_temp += 0.01 * self._currents - 0.003 * self._motor_temp
        self._battery = max(0.3, self._battery - BATTERY_DRAIN)
        self._step_count += 1
        return self.observe()

    def observe(self) -> np.ndarray:
        x, y, h = self.x, self.y, self.heading
        t = self._step_count
        out = np.empty(SENSOR_COUNT)

        d_rays = _wall_distances(x, y, h + _RAY_BEARINGS)
        out[0:8] = 1.0 - d_rays / 1.0

        lamp_gain = 1.0 + 0.3 * math.sin(2 * math.pi * t / LAMP_PERIOD)
        to_lamp = _LAMP - (x, y)
        d_lamp2 = float(to_lamp @ to_lamp)
        bearing_lamp = math.atan2(to_lamp[1], to_lamp[0])
        lobe = np.cos(bearing_lamp - (h + _LIGHT_BEARINGS))
        light = (lamp_gain / (1.0 + d_lamp2)) * (0.2 + 0.8 * np.clip(lobe, 0.0, None))
        out[8:12] = light

        beacon_gain = 1.0 + 0.3 * math.sin(2 * math.pi * t / BEACON_PERIOD + 1.0)
        to_beacon = _BEACON - (x, y)
        d_beacon2 = float(to_beacon @ to_beacon)
        bearing_beacon = math.atan2(to_beacon[1], to_beacon[0])
        lobe_ir = np.cos(bearing_beacon - (h + _LIGHT_BEARINGS))
        out[12:16] = (beacon_gain / (1.0 + d_beacon2)) * (0.2 + 0.8 * np.clip(lobe_ir, 0.0, None))

        out[16] = (math.cos(h) + 1.0) / 2.0
        out[17] = (math.sin(h) + 1.0) / 2.0
        out[18] = 0.5 + 0.3 * math.exp(-(x * x + y * y) / 0.25)
        out[19] = (
            0.35
            + 0.25 * x / PEN_SIZE
            + 0.1 * y / PEN_SIZE
            + 0.08 * math.sin(2 * math.pi * t / HEAT_PERIOD)
        )
        out[20] = self._heat
        out[21] = 0.5 + 0.1 * self._accel_v
        out[22] = 0.5 + 0.25 * self.v * self.omega
        out[23] = 0.5 + self.omega / (2.0 * TURN_CMD)
        out[24:27] = 0.5 + self._wheel_speeds / 2.0
        out[27:30] = self._currents
        out[30:33] = self._motor_temp
        out[33:36] = self._battery - 0.3 * self._currents
        load = float(self._currents.mean())
        out[36] = self._battery - 0.05 * load
        out[37] = 0.95 * self._battery - 0.03 * load
        out[38:42] = 1.0 - _wall_distances(x, y, h + _DIAG_BEARINGS) / 2.0
        out[42] = self.bump
        out[43] = abs(self.v) / SPEED_CMD
        out[44] = 0.5 + self.v
        out[45] = x / PEN_SIZE
        out[46] = y / PEN_SIZE
        out[47] = math.hypot(x - 1.0, y - 1.0) / math.sqrt(2.0)
        out[48] = (_wrap_angle(math.atan2(1.0 - y, 1.0 - x) - h) / math.pi + 1.0) / 2.0
        out[49] = abs(self._accel_v) * 2.0 + abs(self._accel_omega) * 0.15
        out[50] = 1.0 - math.sqrt(d_beacon2) / 2.25
        out[51] = self._bump_trace
        out[52] = light.mean()

        out += SHIMMER_AMPLITUDE * 0.5 * (
            np.sin(_SHIMMER_W1 * t + _SHIMMER_PHASE1)
            + np.sin(_SHIMMER_W2 * t + _SHIMMER_PHASE2)
        )
        if self.sensor_noise > 0.0:
            out += self._rng.normal(0.0, self.sensor_noise, SENSOR_COUNT)
        return np.clip(out, 0.0, 1.0)


class RecenterController:
    """Drives toward the pen centre: rotate until roughly facing it, then
    move forward; stop once close.  Used for the recenter phase only."""

    STOP_RADIUS = 0.15
    TURN_TOLERANCE = 0.35

    def action(self, pose) -> int:
        x, y, h = pose
        if math.hypot(x - 1.0, y - 1.0) < self.STOP_RADIUS:
            return DEFAULT_ACTIONS.index("stop")
        err = _wrap_angle(math.atan2(1.0 - y, 1.0 - x) - h)
        if abs(err) > self.TURN_TOLERANCE:
            return DEFAULT_ACTIONS.index("rotate_ccw" if err > 0 else "rotate_cw")
        return DEFAULT_ACTIONS.index("forward")


class Phase(Enum):
    LEARN = "learn"
    TEST = "test"
    RECENTER = "recenter"


@dataclass(frozen=True)
class ExcursionSchedule:
    """Interruption protocol: geometric entry into fixed-length excursions."""

    mean_interval: float = 50.0
    test_steps: int = 50
    recenter_steps: int = 20
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and self.mean_interval < 1.0:
            raise ConfigurationError("mean interval must be >= 1 step")
        if self.test_steps < 1 or self.recenter_steps < 1:
            raise ConfigurationError("phase lengths must be >= 1 step")


@dataclass(frozen=True)
class PhaseInfo:
    phase: Phase
    excursion_action: int | None
    excursion_started: bool


class Scheduler:
    """Tick-by-tick phase machine.  Call begin_tick() once per tick, before
    acting; the returned phase governs that tick."""

    def __init__(self, schedule: ExcursionSchedule, n_excursion_policies: int, rng):
        self.schedule = schedule
        self.n_excursion_policies = n_excursion_policies
        self.rng = rng
        self.phase = Phase.LEARN
        self._left = 0
        self.excursion_action: int | None = None

    def begin_tick(self) -> PhaseInfo:
        started = False
        if self.phase is Phase.LEARN:
            if self.schedule.enabled and self.rng.random() < 1.0 / self.schedule.mean_interval:
                self.phase = Phase.TEST
                self._left = self.schedule.test_steps
                self.excursion_action = int(self.rng.integers(self.n_excursion_policies))
                started = True
        elif self._left == 0:
            if self.phase is Phase.TEST:
                self.phase = Phase.RECENTER
                self._left = self.schedule.recenter_steps
            else:
                self.phase = Phase.LEARN
                self.excursion_action = None
                return self.begin_tick()
        if self.phase is not Phase.LEARN:
            self._left -= 1
        return PhaseInfo(self.phase, self.excursion_action, started)


LOG_MAGIC = "# horde-log v1"


class LogWriter:
    """Records the behaviour stream: one row per tick with the executed
    action, its exact behaviour probability, and the resulting observation.
    Floats are written in shortest round-trip form, so replay is bit-exact.
    """

    def __init__(self, path, sensor_count: int, action_names):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8")
        self._fh.write(LOG_MAGIC + "\n")
        self._fh.write(f"# sensors={sensor_count}\n")
        self._fh.write("# actions=" + ",".join(action_names) + "\n")
        cols = ["step", "action", "behaviour_prob"] + [f"s{i:03d}" for i in range(sensor_count)]
        self._fh.write(",".join(cols) + "\n")

    def write(self, step: int, action: int, behaviour_prob: float, obs: np.ndarray):
        vals = [str(step), str(action), repr(float(behaviour_prob))]
        vals += [repr(float(v)) for v in obs]
        self._fh.write(",".join(vals) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LogReplay:
    """Reads a recorded behaviour stream back, in order, bit-exactly."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "r", encoding="utf-8")
        self._line_no = 0
        magic = self._next_line()
        if magic != LOG_MAGIC:
            raise LogParseError(f"not a behaviour log (got {magic!r})", self._line_no)
        sensors = self._next_line()
        if not sensors.startswith("# sensors="):
            raise LogParseError("missing sensor count header", self._line_no)
        self.sensor_count = int(sensors.removeprefix("# sensors="))
        actions = self._next_line()
        if not actions.startswith("# actions="):
            raise LogParseError("missing action set header", self._line_no)
        self.action_names = tuple(actions.removeprefix("# actions=").split(","))
        self._next_line()  # column header

    def _next_line(self) -> str:
        line = self._fh.readline()
        self._line_no += 1
        return line.rstrip("\n")

    def rows(self):
        """Yields (step, action, behaviour_prob, observation) until the log ends."""
        expected = 3 + self.sensor_count
        while True:
            line = self._fh.readline()
            self._line_no += 1
            if not line:
                return
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != expected:
                raise LogParseError(
                    f"expected {expected} fields, got {len(parts)}", self._line_no
                )
            try:
                step = int(parts[0])
                action = int(parts[1])
                prob = float(parts[2])
                obs = np.array([float(p) for p in parts[3:]])
            except ValueError as err:
                raise LogParseError(str(err), self._line_no) from None
            yield step, action, prob, obs

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
