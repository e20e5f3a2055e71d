//! Backward value recursions for both solver backends.
//!
//! Per stage, each player's state-action value matrix is
//!
//! ```text
//! Γ_n = M_n + [ S11    S1x·A            S1x·B          ]
//!             [ A'Sx1  A'Sxx·A + D_xx   A'Sxx·B + D_xu ]
//!             [ B'Sx1  B'Sxx·A + D_ux   B'Sxx·B + D_uu ]
//! ```
//!
//! where `S` is the player's propagated value matrix and `D` weights the
//! dynamics curvature `G^l`. The stage game stacks each player's own-input
//! rows of `Γ_n` into `F δu + P δx + H = 0`; its solution yields the affine
//! policy `δu = K δx + s`.
//!
//! The value update substitutes the stage policy on one side only,
//!
//! ```text
//! S_x1 <- Γ_x1 + Γ_xu s       S_xx <- Γ_xx + Γ_xu K
//! ```
//!
//! which keeps every stage equation equal to block elimination of the
//! stacked root-finding system, so the pass reproduces the exact Newton
//! step. (The two-sided congruence `L Γ L'` familiar from single-agent
//! control coincides with this exactly when `N = 1`, where the full input
//! row of `Γ` vanishes at the stage optimum; with several players the other
//! players' rows of `Γ_n` stay nonzero and the congruence would inject
//! spurious reaction terms.) As a consequence `S_xx` is generally
//! non-symmetric for `N >= 2`, matching the coupled open-loop Riccati
//! structure of linear-quadratic games.
//!
//! The two backends differ in one place only: the stagewise Newton pass
//! weights `G^l` by the costate rows `Ω` (pure adjoint recursion), the DDP
//! pass by the propagated tail-gradient row `S^{1x}`. The two weightings
//! agree at a stationary nominal and differ by `O(ε)` at distance `ε`, which
//! is what makes the DDP update quadratically close to the Newton update.
//!
//! An eigenvalue-shift regularizer can be applied to each `Γ_n` before the
//! stage solve: when the minimum eigenvalue of the curvature block (the
//! symmetric part of the quadratic form in `(δx, δu)`) falls below the
//! floor, the whole diagonal is shifted up to meet it.

use nalgebra::{DMatrix, DVector};

use crate::derivatives::{StageDerivatives, TerminalDerivatives};
use crate::error::{Error, Result};

/// Per-stage affine control law `u_k = ū_k + K_k δx_k + s_k`.
#[derive(Debug, Clone)]
pub struct AffinePolicy {
    /// `K_k`, each `n_u × n_x`.
    pub gains: Vec<DMatrix<f64>>,
    /// `s_k`, each `n_u`.
    pub offsets: Vec<DVector<f64>>,
}

impl AffinePolicy {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// Control delta at stage `k` for state deviation `dx`.
    pub fn delta(&self, k: usize, dx: &DVector<f64>) -> DVector<f64> {
        &self.gains[k] * dx + &self.offsets[k]
    }

    /// Largest offset magnitude; zero exactly at a stationary nominal.
    pub fn max_offset(&self) -> f64 {
        self.offsets.iter().map(|s| s.amax()).fold(0.0, f64::max)
    }
}

/// Stage-game matrices retained for diagnostics: `F δu + P δx + H = 0`.
#[derive(Debug, Clone)]
pub struct StageGame {
    pub f: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub h: DVector<f64>,
}

/// Value quantities produced by a backward pass.
///
/// `s[n][k]` is player `n`'s `(1 + n_x)^2` value matrix at stage `k`
/// (0..=T): entry (0,0) is twice the modeled cost-to-go, the first row and
/// column hold the propagated tail gradient (kept equal to each other), and
/// the `xx` block the tail-gradient sensitivity, which is non-symmetric for
/// multi-player games. `omega[n][k]` holds the costate rows of the Newton
/// pass; it is empty for the DDP pass. Stage-game matrices are always
/// retained; the per-player `Γ` matrices only when requested.
#[derive(Debug, Clone)]
pub struct ValueBundle {
    pub s: Vec<Vec<DMatrix<f64>>>,
    pub omega: Vec<Vec<DVector<f64>>>,
    pub stage_games: Vec<StageGame>,
    /// `gammas[k][n]`, post-regularization, captured on request.
    pub gammas: Option<Vec<Vec<DMatrix<f64>>>>,
}

/// One eigenvalue-shift event.
#[derive(Debug, Clone, Copy)]
pub struct RegEvent {
    pub stage: usize,
    pub player: usize,
    pub min_eig: f64,
    pub shift: f64,
}

/// All shifts applied during one backward pass.
#[derive(Debug, Clone, Default)]
pub struct RegularizationLog {
    pub events: Vec<RegEvent>,
}

impl RegularizationLog {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
    pub fn len(&self) -> usize {
        self.events.len()
    }
}

/// Knobs for [`backward_pass`]. `lambda == 0` disables the regularizer
/// entirely.
#[derive(Debug, Clone)]
pub struct BackwardOptions {
    pub lambda: f64,
    pub capture_gammas: bool,
    /// Fault-injection hook for verification suites: flips the sign of the
    /// DDP second-order weighting term. Not for regular use.
    #[doc(hidden)]
    pub flip_ddp_second_order_sign: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions {
            lambda: 0.0,
            capture_gammas: false,
            flip_ddp_second_order_sign: false,
        }
    }
}

impl BackwardOptions {
    pub fn with_lambda(lambda: f64) -> Self {
        BackwardOptions {
            lambda,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SecondOrderWeights {
    /// Weight `G^l` by the costate rows `Ω_{n,k+1}` (stagewise Newton).
    CostateRows,
    /// Weight `G^l` by the value-matrix gradient rows `S^{1x}_{n,k+1}` (DDP).
    ValueRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ValueUpdate {
    /// One-sided policy substitution: exact block elimination of the
    /// stacked root-finding system (the solver passes).
    OneSided,
    /// Full congruence `L Γ L'`: the Bellman-style update whose stage games
    /// are subgame-perfect for the quadratic model. Its fixed point is a
    /// feedback-flavored quasi-equilibrium, and its gains define the local
    /// feedback policies.
    Congruence,
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Minimum eigenvalue of a (symmetrized) matrix.
fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let eigs = symmetrized(m).symmetric_eigenvalues();
    let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::EigenvalueFailure { dim: m.nrows() });
    }
    Ok(min)
}

/// Eigenvalue-shift regularizer: if the minimum eigenvalue `e` of `gamma`
/// falls below `lambda`, returns `gamma + (lambda - e)·I` and the shift
/// `lambda - e`; otherwise returns `gamma` unchanged and shift 0.
pub fn regularize(gamma: &DMatrix<f64>, lambda: f64) -> Result<(DMatrix<f64>, f64)> {
    let e = min_eigenvalue(gamma)?;
    if e < lambda {
        let shift = lambda - e;
        let mut out = gamma.clone();
        for i in 0..out.nrows() {
            out[(i, i)] += shift;
        }
        Ok((out, shift))
    } else {
        Ok((gamma.clone(), 0.0))
    }
}

/// Solution of one stagewise quadratic game.
#[derive(Debug, Clone)]
pub struct StageGameSolution {
    pub game: StageGame,
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
}

/// Reciprocal condition number below which `F_k` is treated as singular.
pub const STAGE_RCOND_MIN: f64 = 1e-12;

/// Assembles and solves the stage game from the players' `Γ` matrices:
/// stacks each player's own-input row blocks into `F`, `P`, `H` and solves
/// `s = -F⁻¹H`, `K = -F⁻¹P`.
pub fn solve_stage_game(
    gammas: &[DMatrix<f64>],
    input_dims: &[usize],
    state_dim: usize,
    stage: usize,
) -> Result<StageGameSolution> {
    let n_u: usize = input_dims.iter().sum();
    let n_x = state_dim;
    let mut f = DMatrix::zeros(n_u, n_u);
    let mut p = DMatrix::zeros(n_u, n_x);
    let mut h = DVector::zeros(n_u);
    let mut offset = 0usize;
    for (n, &d) in input_dims.iter().enumerate() {
        let gamma = &gammas[n];
        let expected = 1 + n_x + n_u;
        if gamma.nrows() != expected || gamma.ncols() != expected {
            return Err(Error::dimension(
                format!("gamma for player {n} at stage {stage}"),
                expected * expected,
                gamma.len(),
            ));
        }
        let row0 = 1 + n_x + offset;
        f.view_mut((offset, 0), (d, n_u))
            .copy_from(&gamma.view((row0, 1 + n_x), (d, n_u)));
        p.view_mut((offset, 0), (d, n_x))
            .copy_from(&gamma.view((row0, 1), (d, n_x)));
        h.rows_mut(offset, d)
            .copy_from(&gamma.view((row0, 0), (d, 1)));
        offset += d;
    }

    let sv = f.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if !rcond.is_finite() || rcond < STAGE_RCOND_MIN {
        return Err(Error::StageSingular { stage, rcond });
    }
    let lu = f.clone().lu();
    let offset_vec = lu
        .solve(&(-&h))
        .ok_or(Error::StageSingular { stage, rcond })?;
    let gain = lu
        .solve(&(-&p))
        .ok_or(Error::StageSingular { stage, rcond })?;

    Ok(StageGameSolution {
        game: StageGame { f, p, h },
        gain,
        offset: offset_vec,
    })
}

/// Stagewise Newton backward pass. Initializes the per-player value matrix
/// and costate row from the terminal quadraticization, then recurses
/// through the controlled stages forming `Γ`, regularizing, and solving the
/// stage game.
pub fn newton_backward(
    stage_derivs: &[StageDerivatives],
    terminal: &TerminalDerivatives,
    input_dims: &[usize],
    lambda: f64,
) -> Result<(AffinePolicy, ValueBundle, RegularizationLog)> {
    backward_pass(
        stage_derivs,
        terminal,
        input_dims,
        &BackwardOptions::with_lambda(lambda),
        SecondOrderWeights::CostateRows,
        ValueUpdate::OneSided,
    )
}

/// DDP backward pass; identical to [`newton_backward`] except that the
/// dynamics-curvature correction is weighted by the propagated value
/// matrix's gradient row instead of the costate row.
pub fn ddp_backward(
    stage_derivs: &[StageDerivatives],
    terminal: &TerminalDerivatives,
    input_dims: &[usize],
    lambda: f64,
) -> Result<(AffinePolicy, ValueBundle, RegularizationLog)> {
    backward_pass(
        stage_derivs,
        terminal,
        input_dims,
        &BackwardOptions::with_lambda(lambda),
        SecondOrderWeights::ValueRows,
        ValueUpdate::OneSided,
    )
}

pub fn newton_backward_with(
    stage_derivs: &[StageDerivatives],
    terminal: &TerminalDerivatives,
    input_dims: &[usize],
    opts: &BackwardOptions,
) -> Result<(AffinePolicy, ValueBundle, RegularizationLog)> {
    backward_pass(
        stage_derivs,
        terminal,
        input_dims,
        opts,
        SecondOrderWeights::CostateRows,
        ValueUpdate::OneSided,
    )
}

pub fn ddp_backward_with(
    stage_derivs: &[StageDerivatives],
    terminal: &TerminalDerivatives,
    input_dims: &[usize],
    opts: &BackwardOptions,
) -> Result<(AffinePolicy, ValueBundle, RegularizationLog)> {
    backward_pass(
        stage_derivs,
        terminal,
        input_dims,
        opts,
        SecondOrderWeights::ValueRows,
        ValueUpdate::OneSided,
    )
}

/// Bellman-style backward pass with the full congruence value update: each
/// stage game is the subgame-perfect quadratic game given the propagated
/// (policy-substituted) value matrices. The resulting gains are the local
/// *feedback* policies; around the fixed point of this pass (advance with
/// [`crate::solver::ddp_forward`]) a unilateral policy deviation improves a
/// player's cost only to second order in the state perturbation.
///
/// This is distinct from the solver passes, whose one-sided update makes
/// the iteration an exact root-finder for the open-loop stationarity
/// conditions; the two coincide for single-player problems.
pub fn feedback_backward(
    stage_derivs: &[StageDerivatives],
    terminal: &TerminalDerivatives,
    input_dims: &[usize],
    lambda: f64,
) -> Result<(AffinePolicy, ValueBundle, RegularizationLog)> {
    backward_pass(
        stage_derivs,
        terminal,
        input_dims,
        &BackwardOptions::with_lambda(lambda),
        SecondOrderWeights::ValueRows,
        ValueUpdate::Congruence,
    )
}

fn backward_pass(
    stage_derivs: &[StageDerivatives],
    terminal: &TerminalDerivatives,
    input_dims: &[usize],
    opts: &BackwardOptions,
    weights: SecondOrderWeights,
    value_update: ValueUpdate,
) -> Result<(AffinePolicy, ValueBundle, RegularizationLog)> {
    let t = stage_derivs.len();
    if t == 0 {
        return Err(Error::InvalidOptions("empty stage bundle sequence".into()));
    }
    let num_players = terminal.m.len();
    if input_dims.len() != num_players {
        return Err(Error::dimension(
            "input_dims",
            num_players,
            input_dims.len(),
        ));
    }
    let n_x = terminal.m[0].nrows() - 1;
    let n_u: usize = input_dims.iter().sum();
    let n_z = n_x + n_u;
    let track_costates = weights == SecondOrderWeights::CostateRows;

    let mut s_mats: Vec<Vec<DMatrix<f64>>> =
        vec![vec![DMatrix::zeros(1 + n_x, 1 + n_x); t + 1]; num_players];
    let mut omegas: Vec<Vec<DVector<f64>>> = if track_costates {
        vec![vec![DVector::zeros(n_x); t + 1]; num_players]
    } else {
        vec![Vec::new(); num_players]
    };

    for n in 0..num_players {
        s_mats[n][t] = symmetrized(&terminal.m[n]);
        if track_costates {
            omegas[n][t] = terminal.m[n].column(0).rows(1, n_x).into_owned();
        }
    }

    let mut gains = vec![DMatrix::zeros(n_u, n_x); t];
    let mut offsets = vec![DVector::zeros(n_u); t];
    let mut stage_games: Vec<Option<StageGame>> = vec![None; t];
    let mut captured = opts
        .capture_gammas
        .then(|| vec![Vec::with_capacity(num_players); t]);
    let mut log = RegularizationLog::default();

    for k in (0..t).rev() {
        let sd = &stage_derivs[k];
        let a = &sd.a;
        let b = &sd.b;
        let at = a.transpose();
        let bt = b.transpose();

        let mut gammas = Vec::with_capacity(num_players);
        for n in 0..num_players {
            let s_next = &s_mats[n][k + 1];
            // Second-order dynamics weighting: the single structural
            // difference between the two backends.
            let weight_row: DVector<f64> = match weights {
                SecondOrderWeights::CostateRows => omegas[n][k + 1].clone(),
                SecondOrderWeights::ValueRows => s_next.column(0).rows(1, n_x).into_owned(),
            };
            let mut d = DMatrix::zeros(n_z, n_z);
            for (l, gl) in sd.g.iter().enumerate() {
                if weight_row[l] != 0.0 {
                    d += gl * weight_row[l];
                }
            }
            if opts.flip_ddp_second_order_sign && weights == SecondOrderWeights::ValueRows {
                d = -d;
            }

            let s11 = s_next[(0, 0)];
            // Tail-gradient column and its row transpose; kept equal by the
            // one-sided update below.
            let w_next = s_next.column(0).rows(1, n_x).into_owned();
            let sxx = s_next.view((1, 1), (n_x, n_x)).into_owned();

            let wt_a = w_next.transpose() * a;
            let wt_b = w_next.transpose() * b;
            let at_sxx = &at * &sxx;
            let bt_sxx = &bt * &sxx;

            let mut bp = DMatrix::zeros(1 + n_z, 1 + n_z);
            bp[(0, 0)] = s11;
            bp.view_mut((0, 1), (1, n_x)).copy_from(&wt_a);
            bp.view_mut((0, 1 + n_x), (1, n_u)).copy_from(&wt_b);
            bp.view_mut((1, 0), (n_x, 1)).copy_from(&wt_a.transpose());
            bp.view_mut((1 + n_x, 0), (n_u, 1))
                .copy_from(&wt_b.transpose());
            bp.view_mut((1, 1), (n_x, n_x))
                .copy_from(&(&at_sxx * a + d.view((0, 0), (n_x, n_x))));
            bp.view_mut((1, 1 + n_x), (n_x, n_u))
                .copy_from(&(&at_sxx * b + d.view((0, n_x), (n_x, n_u))));
            bp.view_mut((1 + n_x, 1), (n_u, n_x))
                .copy_from(&(&bt_sxx * a + d.view((n_x, 0), (n_u, n_x))));
            bp.view_mut((1 + n_x, 1 + n_x), (n_u, n_u))
                .copy_from(&(&bt_sxx * b + d.view((n_x, n_x), (n_u, n_u))));

            let mut gamma = &sd.m[n] + bp;

            if opts.lambda > 0.0 {
                // The eigenvalue floor is checked on the curvature block:
                // the quadratic form in (δx, δu) that the shift has to make
                // positive definite. The first row/column carry the tail
                // gradient, which stays large even at an equilibrium and
                // would otherwise force an unbounded permanent shift. The
                // shift itself goes on the full diagonal; on the constant
                // entry it only offsets the value bookkeeping.
                let curvature = gamma.view((1, 1), (n_z, n_z)).into_owned();
                let e = min_eigenvalue(&curvature)?;
                if e < opts.lambda {
                    let shift = opts.lambda - e;
                    for i in 0..gamma.nrows() {
                        gamma[(i, i)] += shift;
                    }
                    log.events.push(RegEvent {
                        stage: k,
                        player: n,
                        min_eig: e,
                        shift,
                    });
                }
            }
            gammas.push(gamma);
        }

        let sol = solve_stage_game(&gammas, input_dims, n_x, k)?;

        for n in 0..num_players {
            let gamma = &gammas[n];
            s_mats[n][k] = match value_update {
                ValueUpdate::OneSided => {
                    let g_x1 = gamma.column(0).rows(1, n_x).into_owned();
                    let g_xx = gamma.view((1, 1), (n_x, n_x)).into_owned();
                    let g_xu = gamma.view((1, 1 + n_x), (n_x, n_u)).into_owned();
                    let g_1u = gamma.row(0).columns(1 + n_x, n_u).into_owned();
                    let g_u1 = gamma.column(0).rows(1 + n_x, n_u).into_owned();
                    let g_uu = gamma.view((1 + n_x, 1 + n_x), (n_u, n_u)).into_owned();

                    // One-sided policy substitution (block elimination of
                    // the stacked Newton system); see the module docs.
                    let w_new = &g_x1 + &g_xu * &sol.offset;
                    let sxx_new = &g_xx + &g_xu * &sol.gain;
                    let s11_new = gamma[(0, 0)]
                        + (&g_1u * &sol.offset)[(0, 0)]
                        + sol.offset.dot(&g_u1)
                        + (sol.offset.transpose() * &g_uu * &sol.offset)[(0, 0)];

                    let mut s_new = DMatrix::zeros(1 + n_x, 1 + n_x);
                    s_new[(0, 0)] = s11_new;
                    s_new
                        .view_mut((0, 1), (1, n_x))
                        .copy_from(&w_new.transpose());
                    s_new.view_mut((1, 0), (n_x, 1)).copy_from(&w_new);
                    s_new.view_mut((1, 1), (n_x, n_x)).copy_from(&sxx_new);
                    s_new
                }
                ValueUpdate::Congruence => {
                    // S = L Γ L' with L = [[1, 0, s'], [0, I, K']].
                    let mut l_mat = DMatrix::zeros(1 + n_x, 1 + n_z);
                    l_mat[(0, 0)] = 1.0;
                    l_mat
                        .view_mut((0, 1 + n_x), (1, n_u))
                        .copy_from(&sol.offset.transpose());
                    l_mat
                        .view_mut((1, 1), (n_x, n_x))
                        .copy_from(&DMatrix::identity(n_x, n_x));
                    l_mat
                        .view_mut((1, 1 + n_x), (n_x, n_u))
                        .copy_from(&sol.gain.transpose());
                    symmetrized(&(&l_mat * gamma * l_mat.transpose()))
                }
            };

            if track_costates {
                let cx = sd.m[n].column(0).rows(1, n_x).into_owned();
                omegas[n][k] = cx + &at * &omegas[n][k + 1];
            }
        }

        if let Some(cap) = captured.as_mut() {
            cap[k] = gammas;
        }
        gains[k] = sol.gain;
        offsets[k] = sol.offset;
        stage_games[k] = Some(sol.game);
    }

    let policy = AffinePolicy { gains, offsets };
    let bundle = ValueBundle {
        s: s_mats,
        omega: omegas,
        stage_games: stage_games.into_iter().map(Option::unwrap).collect(),
        gammas: captured,
    };
    Ok((policy, bundle, log))
}
