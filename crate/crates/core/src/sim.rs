//! Closed-loop scenario engine: LIPM plant, DCM tracking with ZMP modification, step
//! adjustment, collaboration escalation driven by simulated fingertips, and touchdown compliance.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::balance::{clamp_zmp, com_regulator, zmp_modification, ZmpModification};
use crate::collaboration::{update as collab_update, CollabPhase, CollabState};
use crate::compliance::{BumpArray, TouchdownCompliance, BUMP_RANGE};
use crate::dynamics::{dcm_of_state, step_lipm_exact, LipmState};
use crate::planner::{dcm_reference, DcmReference, Footstep, FootstepPlan, Side};
use crate::scenario::{Event, PullShape, Scenario};
use crate::step_qp::{apply_solution, build_problem, solve};
use crate::tactile::{simulate_pressure, ChangeDetector, Finger, ForceProfile, NeedlePolicy, TactileFrame};
use crate::{Error, Result, Vec2};

/// `%.9g`-style formatting: 9 significant digits, trailing zeros trimmed.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const FINGER_COLUMNS: [&str; 4] = ["pressure_index", "pressure_middle", "pressure_ring", "pressure_little"];

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub t: f64,
    pub com: Vec2,
    pub dcm: Vec2,
    /// DCM the controller tracks on this tick, including any CoM regulation offset.
    pub dcm_ref: Vec2,
    pub zmp: Vec2,
    pub p_mod: Vec2,
    pub phase: CollabPhase,
    pub hand_y: f64,
    pub pressures: Vec<f64>,
    pub step_index: usize,
    /// Step error committed during the current support phase.
    pub step_adjust: Vec2,
    /// `e^{omega T}` of the current step.
    pub tau_new: f64,
    /// Position of the active support foot.
    pub support: Vec2,
    pub time_in_step: f64,
    pub step_duration: f64,
}

impl SimRow {
    pub fn dcm_error(&self) -> Vec2 {
        self.dcm - self.dcm_ref
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Fall,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Ok => "OK",
            Verdict::Fall => "FALL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustedStep {
    pub t: f64,
    /// Index of the support step that was retimed; the next step is the one moved.
    pub step_index: usize,
    /// DCM error that posed the problem, before the plan changed.
    pub dcm_error: Vec2,
    /// Time in step when the problem was posed.
    pub time_in_step: f64,
    pub p_step_err: Vec2,
    pub b_err: Vec2,
    pub tau_new: f64,
    pub new_step_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTransition {
    pub t: f64,
    pub from: CollabPhase,
    pub to: CollabPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplianceStats {
    pub active_ticks: usize,
    pub max_leg_offset: f64,
    pub max_abs_roll: f64,
    pub max_abs_pitch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub verdict: Verdict,
    pub ticks: usize,
    pub max_dcm_error: f64,
    pub max_dcm_error_time: f64,
    pub steps_taken: usize,
    pub adjusted_steps: Vec<AdjustedStep>,
    pub qp_solves: usize,
    pub qp_failures: usize,
    pub transitions: Vec<PhaseTransition>,
    pub needle_stop_time: Option<f64>,
    pub compliance: ComplianceStats,
    pub event_log: Vec<String>,
}

impl Summary {
    /// First time the collaboration state entered `phase`.
    pub fn first_entry(&self, phase: CollabPhase) -> Option<f64> {
        self.transitions.iter().find(|tr| tr.to == phase).map(|tr| tr.t)
    }

    /// Adjustments that actually moved or retimed the step.
    pub fn nonzero_adjustments(&self, tol: f64) -> Vec<AdjustedStep> {
        self.adjusted_steps.iter().copied().filter(|a| a.p_step_err.amax() > tol).collect()
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_sig).unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k}: {v}");
        };
        line("scenario", self.scenario.clone());
        line("seed", self.seed.to_string());
        line("verdict", self.verdict.as_str().into());
        line("ticks", self.ticks.to_string());
        line("max_dcm_error_m", format_sig(self.max_dcm_error));
        line("max_dcm_error_time_s", format_sig(self.max_dcm_error_time));
        line("steps_taken", self.steps_taken.to_string());
        line("adjusted_steps", self.adjusted_steps.len().to_string());
        line("qp_solves", self.qp_solves.to_string());
        line("qp_failures", self.qp_failures.to_string());
        line("first_arm_adjust_s", opt(self.first_entry(CollabPhase::ArmAdjust)));
        line("first_com_shift_s", opt(self.first_entry(CollabPhase::ComShift)));
        line("first_stepping_s", opt(self.first_entry(CollabPhase::Stepping)));
        line("phase_transitions", self.transitions.len().to_string());
        line("needle_stop_s", opt(self.needle_stop_time));
        line("compliance_ticks", self.compliance.active_ticks.to_string());
        line("compliance_max_leg_offset_m", format_sig(self.compliance.max_leg_offset));
        line("compliance_max_roll_rad", format_sig(self.compliance.max_abs_roll));
        line("compliance_max_pitch_rad", format_sig(self.compliance.max_abs_pitch));
        for (i, a) in self.adjusted_steps.iter().enumerate() {
            line(
                &format!("adjusted_step_{}", i + 1),
                format!(
                    "t={} step={} dx={} dy={} bx={} by={} tau={} step_time={}",
                    format_sig(a.t),
                    a.step_index,
                    format_sig(a.p_step_err.x),
                    format_sig(a.p_step_err.y),
                    format_sig(a.b_err.x),
                    format_sig(a.b_err.y),
                    format_sig(a.tau_new),
                    format_sig(a.new_step_time)
                ),
            );
        }
        for (i, tr) in self.transitions.iter().enumerate() {
            line(
                &format!("transition_{}", i + 1),
                format!("t={} {} -> {}", format_sig(tr.t), tr.from.name(), tr.to.name()),
            );
        }
        for (i, e) in self.event_log.iter().enumerate() {
            line(&format!("event_{}", i + 1), e.clone());
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<SimRow>,
    pub summary: Summary,
}

fn build_plan(scenario: &Scenario) -> Result<FootstepPlan> {
    let params = &scenario.robot;
    let n = scenario
        .plan
        .steps
        .unwrap_or_else(|| (scenario.duration / (0.2 * params.step_time_nominal)).ceil() as usize + 2);
    let half = 0.5 * scenario.plan.step_width;
    let mut side = Side::Left;
    let steps = (0..=n)
        .map(|_| {
            let y = if side == Side::Left { half } else { -half };
            let step = Footstep { position: Vec2::new(0.0, y), nominal_duration: params.step_time_nominal, support_side: side };
            side = side.other();
            step
        })
        .collect();
    FootstepPlan::new(steps, 0, params.kin_bounds)
}

fn reference_for(plan: &FootstepPlan, omega: f64) -> DcmReference {
    let last = plan.steps().last().expect("non-empty plan").position;
    dcm_reference(plan, omega, last)
}

fn plan_tau(plan: &FootstepPlan, omega: f64) -> f64 {
    (omega * plan.current().nominal_duration).exp()
}

fn active(event: &Event, t: f64) -> bool {
    let (t0, t1) = event.window();
    t >= t0 && t < t1
}

fn pull_force(event: &Event, t: f64) -> Vec2 {
    match *event {
        Event::HandPull { t_start, t_end, force, shape, .. } => {
            let dir = event.unit_direction().expect("pull has a direction");
            let magnitude = match shape {
                PullShape::Ramp if t < t_start => 0.0,
                PullShape::Ramp if t >= t_end || t_end == t_start => force,
                PullShape::Ramp => force * (t - t_start) / (t_end - t_start),
                PullShape::Constant if t >= t_start && t < t_end => force,
                PullShape::Constant => 0.0,
            };
            dir * magnitude
        }
        _ => Vec2::zeros(),
    }
}

struct NeedleChannel {
    event: usize,
    t_start: f64,
    t_end: f64,
    profile: ForceProfile,
    detector: Option<ChangeDetector>,
    policy: NeedlePolicy,
}

/// Run a validated scenario. Bit-deterministic for a fixed `(scenario, seed)`.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunOutput> {
    scenario.validate()?;
    let params = scenario.robot.clone();
    let omega = params.omega;
    let dt = scenario.dt;
    let n = scenario.ticks();
    let guard = scenario.balance.singularity_guard;
    let cfg = &scenario.collaboration;
    let inter = &scenario.interaction;
    let model = &scenario.tactile.model;

    let mut plan = build_plan(scenario)?;
    let mut reference = reference_for(&plan, omega);
    let start = reference.initial_dcm();
    let mut state = LipmState::at_rest(0.0, start);
    let mut com_ref = start;
    let mut step_start = 0.0;

    let mut collab = CollabState::new(Vec2::new(inter.hand_start[0], inter.hand_start[1]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = &cfg.layout;
    let centers: Vec<Vec2> = {
        let n = layout.positions.len() as f64;
        let mean = layout.positions.iter().fold(Vec2::zeros(), |a, p| a + Vec2::new(p[0], p[1])) / n;
        layout.positions.iter().map(|p| Vec2::new(p[0], p[1]) - mean).collect()
    };
    let reach = centers.iter().map(|c| c.norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let index_finger = layout.fingers.iter().position(|f| *f == Finger::Index);
    let baseline = TactileFrame { time: 0.0, pressures: vec![model.mean_pressure(inter.preload); layout.len()] };
    let bar_origin = start + collab.hand_pos;
    // The hand holds the bar only in scenarios that script a pull.
    let grasping = scenario.events.iter().any(|e| matches!(e, Event::HandPull { .. }));

    let mut needles = Vec::new();
    for (i, e) in scenario.events.iter().enumerate() {
        if let Event::Needle { t_start, t_end, profile } = e {
            needles.push(NeedleChannel {
                event: i,
                t_start: *t_start,
                t_end: *t_end,
                profile: ForceProfile::load(profile)?,
                detector: None,
                policy: NeedlePolicy::new(),
            });
        }
    }

    let mut compliance = TouchdownCompliance::new(scenario.compliance.controller);
    let mut summary = Summary {
        scenario: scenario.name.clone(),
        seed,
        verdict: Verdict::Ok,
        ticks: n,
        max_dcm_error: 0.0,
        max_dcm_error_time: 0.0,
        steps_taken: 0,
        adjusted_steps: Vec::new(),
        qp_solves: 0,
        qp_failures: 0,
        transitions: Vec::new(),
        needle_stop_time: None,
        compliance: ComplianceStats::default(),
        event_log: Vec::new(),
    };
    let mut event_started = vec![false; scenario.events.len()];
    let mut rows = Vec::with_capacity(n + 1);
    let mut qp_done = false;
    let mut step_adjust = Vec2::zeros();
    let mut prev_err = Vec2::zeros();
    let mut prev_zmp_mod = ZmpModification::zero();
    let mut prev_zmp = plan.current().position;

    for k in 0..=n {
        let t = k as f64 * dt;
        let mut t_in = t - step_start;
        if t_in >= plan.current().nominal_duration - 0.5 * dt && plan.advance() {
            step_start = t;
            t_in = 0.0;
            collab.on_support_switch();
            qp_done = false;
            step_adjust = Vec2::zeros();
            summary.steps_taken += 1;
        }
        // Past the last planned step the robot keeps standing on it.
        t_in = t_in.min(plan.current().nominal_duration);
        for (i, e) in scenario.events.iter().enumerate() {
            if !event_started[i] && t >= e.window().0 {
                event_started[i] = true;
                summary.event_log.push(format!("t={} {} start", format_sig(t), e.kind_name()));
            }
        }

        // Interaction and fingertips.
        let pull = scenario.events.iter().fold(Vec2::zeros(), |a, e| a + pull_force(e, t));
        let bar = bar_origin + pull / inter.grip_stiffness;
        let hand_world = state.com_pos + collab.hand_pos;
        let f_int = if grasping { (bar - hand_world) * inter.grip_stiffness } else { Vec2::zeros() };
        let mut forces: Vec<f64> = centers.iter().map(|c| (inter.preload - f_int.dot(c) / reach).max(0.0)).collect();
        for ch in &needles {
            if t >= ch.t_start && t < ch.t_end {
                if let Some(i) = index_finger {
                    forces[i] += ch.profile.force_at(t - ch.t_start);
                }
            }
        }
        let pressures = forces.iter().map(|f| simulate_pressure(*f, model, &mut rng)).collect::<Result<Vec<_>>>()?;
        let frame = TactileFrame { time: t, pressures };

        for ch in &mut needles {
            if t >= ch.t_start && t < ch.t_end && ch.policy.stopped_at().is_none() {
                let idx = index_finger.ok_or_else(|| Error::Validation("needle events need an index finger".into()))?;
                let det = ch.detector.get_or_insert_with(|| {
                    let reference = model.mean_pressure(forces[idx].max(0.0));
                    ChangeDetector::with_reference(Finger::Index, scenario.tactile.needle_detector, reference)
                });
                let events: Vec<_> = det.push(t, frame.pressures[idx]).into_iter().collect();
                ch.policy.update(&events);
                if let Some(stop) = ch.policy.stopped_at() {
                    summary.needle_stop_time.get_or_insert(stop);
                    summary.event_log.push(format!("t={} needle stop (event {})", format_sig(stop), ch.event));
                }
            }
        }

        // Collaboration escalation.
        let before = collab.phase;
        // Without a grasp the fingertips carry no partner cue.
        let cue_frame = if grasping { &frame } else { &baseline };
        let (next, cmd) = collab_update(&collab, cue_frame, &baseline, prev_err, &prev_zmp_mod, cfg, dt)?;
        collab = next;
        if collab.phase != before {
            summary.transitions.push(PhaseTransition { t, from: before, to: collab.phase });
        }

        // DCM tracking.
        let idx = plan.current_index();
        let support = plan.current().position;
        let dcm = dcm_of_state(&state, omega).dcm();
        let target = |reference: &DcmReference, idx: usize| {
            let nominal = reference.dcm(idx, t_in);
            let u = if cmd.com_reg_enable {
                com_regulator(support, prev_zmp, com_ref + collab.com_offset, state.com_pos, &scenario.balance.com_gains)
            } else {
                Vec2::zeros()
            };
            nominal + u
        };
        let mut dcm_ref = target(&reference, idx);
        let mut err = dcm - dcm_ref;
        let modify = |err: Vec2, step_time: f64| {
            clamp_zmp(zmp_modification(err, omega, t_in, step_time, guard), &params)
        };
        let mut zm = modify(err, plan.current().nominal_duration);

        let err_norm = err.norm();
        if err_norm > summary.max_dcm_error {
            summary.max_dcm_error = err_norm;
            summary.max_dcm_error_time = t;
        }

        let wants_qp = cmd.request_step || zm.any_saturated();
        if wants_qp && !qp_done && plan.next().is_some() {
            qp_done = true;
            summary.qp_solves += 1;
            let cause = if cmd.request_step { "request" } else { "saturation" };
            let outcome = build_problem(err, dcm_ref, &zm, &plan, &params, scenario.balance.weights, t_in)
                .and_then(|problem| solve(&problem))
                .and_then(|sol| apply_solution(&plan, &sol).map(|p| (p, sol)));
            match outcome {
                Ok((_, sol)) if sol.is_zero_adjustment(plan_tau(&plan, omega), 1e-9) => {
                    // Nothing to change, so the phase keeps its chance to adjust later.
                    qp_done = false;
                    summary.event_log.push(format!("t={} step adjustment ({cause}) not needed", format_sig(t)));
                }
                Ok((new_plan, sol)) => {
                    plan = new_plan;
                    reference = reference_for(&plan, omega);
                    step_adjust = sol.p_step_err;
                    summary.adjusted_steps.push(AdjustedStep {
                        t,
                        step_index: idx,
                        dcm_error: err,
                        time_in_step: t_in,
                        p_step_err: sol.p_step_err,
                        b_err: sol.b_err,
                        tau_new: sol.tau_new,
                        new_step_time: sol.new_step_time,
                    });
                    summary.event_log.push(format!(
                        "t={} step adjusted ({cause}) dx={} dy={} step_time={}",
                        format_sig(t),
                        format_sig(sol.p_step_err.x),
                        format_sig(sol.p_step_err.y),
                        format_sig(sol.new_step_time)
                    ));
                    dcm_ref = target(&reference, idx);
                    err = dcm - dcm_ref;
                    zm = modify(err, plan.current().nominal_duration);
                }
                Err(e) => {
                    summary.qp_failures += 1;
                    summary.event_log.push(format!("t={} step adjustment failed ({cause}): {e}", format_sig(t)));
                }
            }
        }

        let zmp = support + zm.p_mod;
        let step_duration = plan.current().nominal_duration;
        rows.push(SimRow {
            t,
            com: state.com_pos,
            dcm,
            dcm_ref,
            zmp,
            p_mod: zm.p_mod,
            phase: collab.phase,
            hand_y: collab.hand_pos.y,
            pressures: frame.pressures,
            step_index: idx,
            step_adjust,
            tau_new: (omega * step_duration).exp(),
            support,
            time_in_step: t_in,
            step_duration,
        });

        if (state.com_pos - support).norm() > scenario.fall_distance || !state.is_finite() {
            summary.verdict = Verdict::Fall;
            summary.event_log.push(format!("t={} fall: CoM left the support region", format_sig(t)));
            break;
        }

        // Touchdown compliance around the end of each step and the start of the next.
        let window = scenario.compliance.window;
        if window > 0.0 {
            let to_touchdown = step_duration - t_in;
            let landed = summary.steps_taken > 0 && t_in < window;
            if to_touchdown <= window || landed {
                let clearance = (BUMP_RANGE * to_touchdown / window).max(0.0);
                let bumps = BumpArray::saturating([clearance; 4]);
                let f_meas = scenario.compliance.f_z_ref * (t_in / window).min(1.0) * 1.2;
                let out = compliance.update(landed, f_meas, scenario.compliance.f_z_ref, &bumps, dt)?;
                let st = &mut summary.compliance;
                st.active_ticks += 1;
                st.max_leg_offset = st.max_leg_offset.max(compliance.leg_offset.abs());
                st.max_abs_roll = st.max_abs_roll.max(out.delta_roll.abs());
                st.max_abs_pitch = st.max_abs_pitch.max(out.delta_pitch.abs());
            }
        }

        let push = scenario
            .events
            .iter()
            .filter(|e| matches!(e, Event::Push { .. }) && active(e, t))
            .fold(Vec2::zeros(), |a, e| match e {
                Event::Push { acceleration, .. } => a + e.unit_direction().expect("push direction") * *acceleration,
                _ => a,
            });
        let disturbance = push + f_int * inter.coupling;
        let nominal_ref = reference.dcm(idx, t_in);
        state = step_lipm_exact(&state, zmp, disturbance, dt, omega);
        com_ref = nominal_ref + (com_ref - nominal_ref) * (-omega * dt).exp();
        prev_err = err;
        prev_zmp_mod = zm;
        prev_zmp = zmp;
    }

    Ok(RunOutput { rows, summary })
}

pub fn csv_header(n_fingers: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t", "com_x", "com_y", "dcm_x", "dcm_y", "dcm_ref_x", "dcm_ref_y", "zmp_x", "zmp_y", "p_mod_x", "p_mod_y", "phase",
        "hand_y",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for i in 0..n_fingers {
        h.push(FINGER_COLUMNS.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("pressure_{i}")));
    }
    h.extend(["step_index", "step_adjust_x", "step_adjust_y", "tau_new"].iter().map(|s| s.to_string()));
    h
}

/// CSV bytes of the time series.
pub fn timeseries_csv(rows: &[SimRow]) -> Result<Vec<u8>> {
    let n_fingers = rows.first().map(|r| r.pressures.len()).unwrap_or(4);
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Io { path: "timeseries.csv".into(), message: e.to_string() };
    w.write_record(csv_header(n_fingers)).map_err(err)?;
    for r in rows {
        let mut rec = vec![
            format_sig(r.t),
            format_sig(r.com.x),
            format_sig(r.com.y),
            format_sig(r.dcm.x),
            format_sig(r.dcm.y),
            format_sig(r.dcm_ref.x),
            format_sig(r.dcm_ref.y),
            format_sig(r.zmp.x),
            format_sig(r.zmp.y),
            format_sig(r.p_mod.x),
            format_sig(r.p_mod.y),
            r.phase.name().to_string(),
            format_sig(r.hand_y),
        ];
        rec.extend(r.pressures.iter().map(|p| format_sig(*p)));
        rec.push(r.step_index.to_string());
        rec.push(format_sig(r.step_adjust.x));
        rec.push(format_sig(r.step_adjust.y));
        rec.push(format_sig(r.tau_new));
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Io { path: "timeseries.csv".into(), message: e.to_string() })
}

/// Write `timeseries.csv` and `summary.txt` into `dir`, creating it if needed.
pub fn write_output(output: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("timeseries.csv");
    std::fs::write(&csv_path, timeseries_csv(&output.rows)?).map_err(|e| Error::io(&csv_path, e))?;
    let summary_path = dir.join("summary.txt");
    std::fs::write(&summary_path, output.summary.to_text()).map_err(|e| Error::io(&summary_path, e))
}
