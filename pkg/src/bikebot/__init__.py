"""Balance-prioritized planning, control and simulation for a two-wheel
steered single-track robot carrying a serial manipulator."""

__version__ = "0.1.0"

from .bem import BemPoint, CapabilityEstimate, NoEquilibriumError, bem_point, bem_residual, \
    max_roll_capability, solve_equilibrium_roll, velocity_bound_check, workspace_contains
from .bezier import BezierTrajectory
from .control import ArmGains, BalanceGains, ControlCommand, arm_velocity_control, \
    balance_control, torque_to_steering, tracking_error_report
from .dynamics import DynamicsMatrices, EnergyBreakdown, coriolis_matrix, dynamics_matrices, \
    energies, forward_acceleration, gravity_gradient, gravity_roll_torque, gravity_vector, \
    inverse_dynamics, mass_matrix
from .model import BikebotParams, Configuration, LinkParams, Pose, RobotModel, default_model, \
    ee_pose_vector, forward_kinematics, frame_chain, link_jacobian, link_transform, load_robot, \
    save_robot, system_jacobian
from .planner import BpikResult, InfeasibleSegmentError, MissionTiming, MotionLimits, \
    PlanResult, PlannerWeights, SolverFailureError, SolverOptions, bezier_eval, bpik, \
    plan_mission, plan_segment
from .dp import DpGrid, DpResult, dp_reference
from .sim import Disturbance, Scenario, SimConfig, SimLog, SimulationBlowUpError, hold_plan, \
    inject, run_batch, run_scenario, step
from .steering import RollApproximationWarning, SteeringLimits, SteeringState, balance_torque, \
    balance_torque_90, contact_radius, h_max, one_wheel_torque, projected_steering_angle, \
    steering_sensitivity, torque_rate_h, wheel_ground_angle
