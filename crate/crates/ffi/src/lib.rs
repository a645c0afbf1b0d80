//! C ABI for the off-policy Monte Carlo evaluation library.
//!
//! Objects cross the boundary as opaque handles created and destroyed by
//! this library; every fallible call returns an [`OffmcStatus`] and leaves a
//! human-readable message retrievable with [`offmc_last_error_message`] on
//! failure. The generated header lives at `include/offmc.h`.
//!
//! Handles are not synchronized; share them across threads only behind the
//! caller's own locking. Seeds behave exactly as in the Rust API, so results
//! are bit-reproducible across the two surfaces.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use offmc::adaptive::run_adaptive;
use offmc::dp::{compute_hat, compute_q_v, mu_hat_exact, optimal_behavior, pdis_variance_total};
use offmc::experiment::exact_value;
use offmc::gridworld::{features_for, make_gridworld, random_policy, GridWorldSpec};
use offmc::learn::{augment, generate_offline, learn_behavior_policy, FeatureKind, TrainConfig};
use offmc::mdp::{TabularMDP, TimedPolicy};
use offmc::rng::{derive_seed, RngSeed};

/// Result of every fallible call in this ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffmcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Arguments were structurally invalid (shapes, ranges, coverage).
    InvalidArgument = 3,
    /// The computation itself failed; see the last error message.
    ComputeFailed = 4,
    /// Reading or writing a file failed.
    IoFailed = 5,
}

/// Opaque handle to a finite-horizon MDP.
pub struct OffmcMdp(TabularMDP);

/// Opaque handle to a time-indexed policy.
pub struct OffmcPolicy(TimedPolicy);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: OffmcStatus, message: &str) -> OffmcStatus {
    set_error(message);
    status
}

fn classify(err: &offmc::Error) -> OffmcStatus {
    match err {
        offmc::Error::Io(_) => OffmcStatus::IoFailed,
        offmc::Error::DimensionMismatch(_)
        | offmc::Error::InvalidDistribution(_)
        | offmc::Error::InvalidArgument(_)
        | offmc::Error::Json(_) => OffmcStatus::InvalidArgument,
        _ => OffmcStatus::ComputeFailed,
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn as_path<'a>(ptr: *const c_char) -> Result<&'a Path, OffmcStatus> {
    if ptr.is_null() {
        return Err(fail(OffmcStatus::NullArgument, "path argument is null"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(text) => Ok(Path::new(text)),
        Err(_) => Err(fail(OffmcStatus::InvalidUtf8, "path is not valid UTF-8")),
    }
}

macro_rules! require {
    ($ptr:expr, $name:literal) => {
        if $ptr.is_null() {
            return fail(
                OffmcStatus::NullArgument,
                concat!($name, " argument is null"),
            );
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn offmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the last error message of the current thread into `buf`
/// (NUL-terminated, truncated to `len` bytes) and return the full message
/// length excluding the terminator. `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn offmc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Create a random grid world: `n * n` cells, four actions, horizon `n`,
/// slip dynamics, seeded rewards normalized to a maximum of 1.
///
/// # Safety
/// `out` must point to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn offmc_gridworld_new(
    n: usize,
    slip: f64,
    seed: u64,
    out: *mut *mut OffmcMdp,
) -> OffmcStatus {
    require!(out, "out");
    match make_gridworld(&GridWorldSpec { n, slip, seed }) {
        Ok(mdp) => {
            *out = Box::into_raw(Box::new(OffmcMdp(mdp)));
            OffmcStatus::Ok
        }
        Err(err) => fail(classify(&err), &err.to_string()),
    }
}

/// Load an MDP from its JSON file format.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn offmc_mdp_load_json(
    path: *const c_char,
    out: *mut *mut OffmcMdp,
) -> OffmcStatus {
    require!(out, "out");
    let path = match as_path(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match TabularMDP::load(path) {
        Ok(mdp) => {
            *out = Box::into_raw(Box::new(OffmcMdp(mdp)));
            OffmcStatus::Ok
        }
        Err(err) => fail(classify(&err), &err.to_string()),
    }
}

/// Write an MDP to its JSON file format.
///
/// # Safety
/// `mdp` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn offmc_mdp_save_json(
    mdp: *const OffmcMdp,
    path: *const c_char,
) -> OffmcStatus {
    require!(mdp, "mdp");
    let path = match as_path(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match (*mdp).0.save(path) {
        Ok(()) => OffmcStatus::Ok,
        Err(err) => fail(classify(&err), &err.to_string()),
    }
}

/// Release an MDP handle (null is a no-op).
///
/// # Safety
/// `mdp` must be null or a handle obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn offmc_mdp_free(mdp: *mut OffmcMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Fetch the state, action, and horizon counts of an MDP.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn offmc_mdp_shape(
    mdp: *const OffmcMdp,
    num_states: *mut usize,
    num_actions: *mut usize,
    horizon: *mut usize,
) -> OffmcStatus {
    require!(mdp, "mdp");
    require!(num_states, "num_states");
    require!(num_actions, "num_actions");
    require!(horizon, "horizon");
    let inner = &(*mdp).0;
    *num_states = inner.num_states();
    *num_actions = inner.num_actions();
    *horizon = inner.horizon();
    OffmcStatus::Ok
}

/// Draw a random full-support policy for this MDP.
///
/// # Safety
/// `mdp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn offmc_random_policy(
    mdp: *const OffmcMdp,
    seed: u64,
    out: *mut *mut OffmcPolicy,
) -> OffmcStatus {
    require!(mdp, "mdp");
    require!(out, "out");
    let policy = random_policy(&(*mdp).0, seed);
    *out = Box::into_raw(Box::new(OffmcPolicy(policy)));
    OffmcStatus::Ok
}

/// Load a policy from its JSON file format.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn offmc_policy_load_json(
    path: *const c_char,
    out: *mut *mut OffmcPolicy,
) -> OffmcStatus {
    require!(out, "out");
    let path = match as_path(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match TimedPolicy::load(path) {
        Ok(policy) => {
            *out = Box::into_raw(Box::new(OffmcPolicy(policy)));
            OffmcStatus::Ok
        }
        Err(err) => fail(classify(&err), &err.to_string()),
    }
}

/// Write a policy to its JSON file format.
///
/// # Safety
/// `policy` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn offmc_policy_save_json(
    policy: *const OffmcPolicy,
    path: *const c_char,
) -> OffmcStatus {
    require!(policy, "policy");
    let path = match as_path(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match (*policy).0.save(path) {
        Ok(()) => OffmcStatus::Ok,
        Err(err) => fail(classify(&err), &err.to_string()),
    }
}

/// Release a policy handle (null is a no-op).
///
/// # Safety
/// `policy` must be null or a handle obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn offmc_policy_free(policy: *mut OffmcPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

fn check_shape(mdp: &TabularMDP, policy: &TimedPolicy) -> Result<(), OffmcStatus> {
    if policy.matches_shape(mdp) {
        Ok(())
    } else {
        Err(fail(
            OffmcStatus::InvalidArgument,
            "policy shape does not match the MDP",
        ))
    }
}

/// Exact total-rewards value J(pi) by dynamic programming.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn offmc_exact_value(
    mdp: *const OffmcMdp,
    pi: *const OffmcPolicy,
    out: *mut f64,
) -> OffmcStatus {
    require!(mdp, "mdp");
    require!(pi, "pi");
    require!(out, "out");
    if let Err(status) = check_shape(&(*mdp).0, &(*pi).0) {
        return status;
    }
    *out = exact_value(&(*mdp).0, &(*pi).0);
    OffmcStatus::Ok
}

/// Exact variance of the per-decision importance-sampling estimator that
/// executes `mu` to evaluate `pi`, marginalized over the initial
/// distribution.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn offmc_pdis_variance(
    mdp: *const OffmcMdp,
    pi: *const OffmcPolicy,
    mu: *const OffmcPolicy,
    out: *mut f64,
) -> OffmcStatus {
    require!(mdp, "mdp");
    require!(pi, "pi");
    require!(mu, "mu");
    require!(out, "out");
    if let Err(status) = check_shape(&(*mdp).0, &(*pi).0) {
        return status;
    }
    if let Err(status) = check_shape(&(*mdp).0, &(*mu).0) {
        return status;
    }
    match pdis_variance_total(&(*mdp).0, &(*pi).0, &(*mu).0) {
        Ok(value) => {
            *out = value;
            OffmcStatus::Ok
        }
        Err(err) => fail(classify(&err), &err.to_string()),
    }
}

/// The globally variance-optimal behavior policy for `pi`.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn offmc_optimal_behavior(
    mdp: *const OffmcMdp,
    pi: *const OffmcPolicy,
    out: *mut *mut OffmcPolicy,
) -> OffmcStatus {
    require!(mdp, "mdp");
    require!(pi, "pi");
    require!(out, "out");
    if let Err(status) = check_shape(&(*mdp).0, &(*pi).0) {
        return status;
    }
    let optimal = optimal_behavior(&(*mdp).0, &(*pi).0);
    *out = Box::into_raw(Box::new(OffmcPolicy(optimal.mu_star)));
    OffmcStatus::Ok
}

/// The locally optimal behavior policy (proportional to `pi sqrt(q^)`),
/// computed exactly from the MDP.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn offmc_mu_hat_exact(
    mdp: *const OffmcMdp,
    pi: *const OffmcPolicy,
    out: *mut *mut OffmcPolicy,
) -> OffmcStatus {
    require!(mdp, "mdp");
    require!(pi, "pi");
    require!(out, "out");
    if let Err(status) = check_shape(&(*mdp).0, &(*pi).0) {
        return status;
    }
    let values = compute_q_v(&(*mdp).0, &(*pi).0);
    let (_, q_hat) = compute_hat(&(*mdp).0, &(*pi).0, &values.q);
    *out = Box::into_raw(Box::new(OffmcPolicy(mu_hat_exact(
        &(*mdp).0,
        &(*pi).0,
        &q_hat,
    ))));
    OffmcStatus::Ok
}

/// Learn a behavior policy from `num_tuples` freshly generated offline
/// tuples using tabular features and default hyperparameters.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn offmc_learn_behavior(
    mdp: *const OffmcMdp,
    pi: *const OffmcPolicy,
    num_tuples: usize,
    seed: u64,
    out: *mut *mut OffmcPolicy,
) -> OffmcStatus {
    require!(mdp, "mdp");
    require!(pi, "pi");
    require!(out, "out");
    let mdp = &(*mdp).0;
    let pi = &(*pi).0;
    if let Err(status) = check_shape(mdp, pi) {
        return status;
    }
    let behaviors: Vec<TimedPolicy> = (0..5)
        .map(|j| random_policy(mdp, derive_seed(seed, 100 + j)))
        .collect();
    let mut rng = RngSeed(derive_seed(seed, 0)).stream();
    let result = generate_offline(mdp, &behaviors, num_tuples, &mut rng).and_then(|dataset| {
        let mut aug_rng = RngSeed(derive_seed(seed, 1)).stream();
        let augmented = augment(&dataset, pi, &mut aug_rng);
        let features = features_for(mdp, FeatureKind::Tabular);
        let config = TrainConfig {
            seed: derive_seed(seed, 2),
            ..TrainConfig::for_features(FeatureKind::Tabular)
        };
        learn_behavior_policy(&augmented, pi, &features, &config)
    });
    match result {
        Ok(learned) => {
            *out = Box::into_raw(Box::new(OffmcPolicy(learned.mu_hat)));
            OffmcStatus::Ok
        }
        Err(err) => fail(classify(&err), &err.to_string()),
    }
}

/// Run the adaptive (UCB) evaluator for `episodes` episodes and return the
/// pooled estimate of J(pi).
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn offmc_adaptive_estimate(
    mdp: *const OffmcMdp,
    pi: *const OffmcPolicy,
    mu_hat: *const OffmcPolicy,
    episodes: usize,
    ucb_c: f64,
    seed: u64,
    out: *mut f64,
) -> OffmcStatus {
    require!(mdp, "mdp");
    require!(pi, "pi");
    require!(mu_hat, "mu_hat");
    require!(out, "out");
    if let Err(status) = check_shape(&(*mdp).0, &(*pi).0) {
        return status;
    }
    if let Err(status) = check_shape(&(*mdp).0, &(*mu_hat).0) {
        return status;
    }
    if episodes == 0 {
        return fail(OffmcStatus::InvalidArgument, "episodes must be >= 1");
    }
    let mut rng = RngSeed(seed).stream();
    match run_adaptive(&(*mdp).0, &(*pi).0, &(*mu_hat).0, episodes, ucb_c, &mut rng) {
        Ok(result) => {
            *out = result.estimate;
            OffmcStatus::Ok
        }
        Err(err) => fail(classify(&err), &err.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    unsafe fn new_gridworld(n: usize, seed: u64) -> *mut OffmcMdp {
        let mut mdp: *mut OffmcMdp = ptr::null_mut();
        assert_eq!(offmc_gridworld_new(n, 0.9, seed, &mut mdp), OffmcStatus::Ok);
        assert!(!mdp.is_null());
        mdp
    }

    #[test]
    fn version_is_a_c_string() {
        let version = unsafe { CStr::from_ptr(offmc_version()) };
        assert!(!version.to_str().unwrap().is_empty());
    }

    #[test]
    fn gridworld_shape_round_trip() {
        unsafe {
            let mdp = new_gridworld(4, 7);
            let (mut s, mut a, mut t) = (0usize, 0usize, 0usize);
            assert_eq!(
                offmc_mdp_shape(mdp, &mut s, &mut a, &mut t),
                OffmcStatus::Ok
            );
            assert_eq!((s, a, t), (16, 4, 4));
            offmc_mdp_free(mdp);
        }
    }

    #[test]
    fn null_arguments_are_reported() {
        unsafe {
            let status = offmc_gridworld_new(3, 0.9, 1, ptr::null_mut());
            assert_eq!(status, OffmcStatus::NullArgument);
            let needed = offmc_last_error_message(ptr::null_mut(), 0);
            assert!(needed > 0);
            let mut buf = vec![0 as c_char; needed + 1];
            offmc_last_error_message(buf.as_mut_ptr(), buf.len());
            let message = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
            assert!(message.contains("null"));
        }
    }

    #[test]
    fn invalid_gridworld_size_fails() {
        unsafe {
            let mut mdp: *mut OffmcMdp = ptr::null_mut();
            assert_eq!(
                offmc_gridworld_new(1, 0.9, 1, &mut mdp),
                OffmcStatus::InvalidArgument
            );
            assert!(mdp.is_null());
        }
    }

    #[test]
    fn missing_file_reports_io_failure() {
        unsafe {
            let mut mdp: *mut OffmcMdp = ptr::null_mut();
            let path = CString::new("/nonexistent/offmc.json").unwrap();
            assert_eq!(
                offmc_mdp_load_json(path.as_ptr(), &mut mdp),
                OffmcStatus::IoFailed
            );
        }
    }

    #[test]
    fn mdp_json_round_trip_through_files() {
        unsafe {
            let dir = tempfile::tempdir().unwrap();
            let path =
                CString::new(dir.path().join("env.json").to_str().unwrap().to_owned()).unwrap();
            let mdp = new_gridworld(3, 9);
            assert_eq!(offmc_mdp_save_json(mdp, path.as_ptr()), OffmcStatus::Ok);
            let mut back: *mut OffmcMdp = ptr::null_mut();
            assert_eq!(
                offmc_mdp_load_json(path.as_ptr(), &mut back),
                OffmcStatus::Ok
            );
            let (mut s, mut a, mut t) = (0usize, 0usize, 0usize);
            assert_eq!(
                offmc_mdp_shape(back, &mut s, &mut a, &mut t),
                OffmcStatus::Ok
            );
            assert_eq!((s, a, t), (9, 4, 3));
            offmc_mdp_free(back);
            offmc_mdp_free(mdp);
        }
    }

    #[test]
    fn exact_value_matches_library_api() {
        unsafe {
            let mdp = new_gridworld(3, 5);
            let mut pi: *mut OffmcPolicy = ptr::null_mut();
            assert_eq!(offmc_random_policy(mdp, 11, &mut pi), OffmcStatus::Ok);
            let mut value = 0.0;
            assert_eq!(offmc_exact_value(mdp, pi, &mut value), OffmcStatus::Ok);

            let rust_mdp = make_gridworld(&GridWorldSpec::new(3, 5)).unwrap();
            let rust_pi = random_policy(&rust_mdp, 11);
            assert_eq!(value, exact_value(&rust_mdp, &rust_pi));

            offmc_policy_free(pi);
            offmc_mdp_free(mdp);
        }
    }

    #[test]
    fn behavior_policies_reduce_variance_through_the_abi() {
        unsafe {
            let mdp = new_gridworld(3, 21);
            let mut pi: *mut OffmcPolicy = ptr::null_mut();
            assert_eq!(offmc_random_policy(mdp, 22, &mut pi), OffmcStatus::Ok);

            let mut var_pi = 0.0;
            assert_eq!(
                offmc_pdis_variance(mdp, pi, pi, &mut var_pi),
                OffmcStatus::Ok
            );

            let mut mu_star: *mut OffmcPolicy = ptr::null_mut();
            assert_eq!(
                offmc_optimal_behavior(mdp, pi, &mut mu_star),
                OffmcStatus::Ok
            );
            let mut var_star = 0.0;
            assert_eq!(
                offmc_pdis_variance(mdp, pi, mu_star, &mut var_star),
                OffmcStatus::Ok
            );

            let mut mu_hat: *mut OffmcPolicy = ptr::null_mut();
            assert_eq!(offmc_mu_hat_exact(mdp, pi, &mut mu_hat), OffmcStatus::Ok);
            let mut var_hat = 0.0;
            assert_eq!(
                offmc_pdis_variance(mdp, pi, mu_hat, &mut var_hat),
                OffmcStatus::Ok
            );

            assert!(var_star <= var_hat + 1e-10);
            assert!(var_hat <= var_pi + 1e-10);

            offmc_policy_free(mu_star);
            offmc_policy_free(mu_hat);
            offmc_policy_free(pi);
            offmc_mdp_free(mdp);
        }
    }

    #[test]
    fn learn_and_adaptive_through_the_abi() {
        unsafe {
            let mdp = new_gridworld(2, 31);
            let mut pi: *mut OffmcPolicy = ptr::null_mut();
            assert_eq!(offmc_random_policy(mdp, 32, &mut pi), OffmcStatus::Ok);

            let mut mu: *mut OffmcPolicy = ptr::null_mut();
            assert_eq!(
                offmc_learn_behavior(mdp, pi, 2_000, 33, &mut mu),
                OffmcStatus::Ok
            );

            let mut estimate = 0.0;
            assert_eq!(
                offmc_adaptive_estimate(mdp, pi, mu, 400, 2f64.powi(-10), 34, &mut estimate),
                OffmcStatus::Ok
            );
            let mut exact = 0.0;
            assert_eq!(offmc_exact_value(mdp, pi, &mut exact), OffmcStatus::Ok);
            assert!((estimate - exact).abs() < 0.5 * exact.max(1.0));

            offmc_policy_free(mu);
            offmc_policy_free(pi);
            offmc_mdp_free(mdp);
        }
    }

    #[test]
    fn shape_mismatch_is_invalid_argument() {
        unsafe {
            let small = new_gridworld(2, 1);
            let big = new_gridworld(3, 1);
            let mut pi: *mut OffmcPolicy = ptr::null_mut();
            assert_eq!(offmc_random_policy(big, 2, &mut pi), OffmcStatus::Ok);
            let mut value = 0.0;
            assert_eq!(
                offmc_exact_value(small, pi, &mut value),
                OffmcStatus::InvalidArgument
            );
            offmc_policy_free(pi);
            offmc_mdp_free(small);
            offmc_mdp_free(big);
        }
    }
}
