//! Collapsed Gibbs sampler for a hierarchical Dirichlet process mixture over
//! grouped data, in its franchise (table/dish) representation.
//!
//! Every group owns a set of tables, every instance of a group sits at one
//! of its tables, and every table serves one globally shared dish. Dishes
//! are the mixture components; their Gaussian parameters are integrated out
//! analytically, so the sampler state is just the seating arrangement plus
//! running sufficient statistics per table and per dish.
//!
//! One sweep resamples the table of every instance and then the dish of
//! every table:
//!
//! - An instance joins an occupied table of its group in proportion to the
//!   table occupancy times the dish predictive of the point, or opens a new
//!   table in proportion to `alpha0` times the dish-mixture predictive. In
//!   that mixture an existing dish `k` carries prior mass
//!   `m_k / (m + gamma)` and a brand-new dish `gamma / (m + gamma)`, where
//!   `m_k` counts the tables serving dish `k` across all groups and `m` all
//!   tables.
//! - A table adopts an existing dish `k` in proportion to `m_k` (with the
//!   table itself removed) times the joint predictive of the table's points
//!   under that dish, or a fresh dish in proportion to `gamma`.
//!
//! All weights are accumulated in log space and every categorical draw is
//! normalized by log-sum-exp, so the sampler keeps working where individual
//! densities underflow. Sweeps are deterministic given the state and the
//! RNG stream.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::Distribution;
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::bayes::{GaussianSuffStats, NormalWishartParams};
use crate::dataset::GroupedDataset;
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, sample_log_weights};

/// Identifier of a table within its group. Ids are never reused within a
/// run.
pub type TableId = usize;

/// Identifier of a dish (global mixture component). Ids are never reused
/// within a run.
pub type DishId = usize;

/// Marker stored while an instance is between tables during a move.
const UNSEATED: TableId = usize::MAX;

/// Rebuild sufficient statistics from raw points after this many
/// incremental add/remove operations, bounding floating-point drift.
const REFRESH_INTERVAL: usize = 10_000;

/// Likelihood abstraction the sampler weighs seatings with: the log
/// predictive of one point, and the joint log predictive of a block of
/// points, both conditional on the points already attributed to a
/// component.
pub trait ObservationModel {
    fn log_point(&self, x: &DVector<f64>, context: &GaussianSuffStats) -> f64;
    fn log_block(&self, block: &GaussianSuffStats, context: &GaussianSuffStats) -> f64;
}

/// Gaussian components under a conjugate Normal-Wishart prior.
#[derive(Clone, Debug)]
pub struct GaussianComponentModel {
    prior: NormalWishartParams,
}

impl GaussianComponentModel {
    pub fn new(prior: NormalWishartParams) -> Self {
        GaussianComponentModel { prior }
    }

    pub fn prior(&self) -> &NormalWishartParams {
        &self.prior
    }
}

impl ObservationModel for GaussianComponentModel {
    fn log_point(&self, x: &DVector<f64>, context: &GaussianSuffStats) -> f64 {
        self.prior
            .log_predictive(x, context)
            .expect("sampler inputs are validated finite")
    }

    fn log_block(&self, block: &GaussianSuffStats, context: &GaussianSuffStats) -> f64 {
        let mut combined = context.clone();
        combined.add_stats(block);
        let joint = self
            .prior
            .log_marginal_stats(&combined)
            .expect("sampler statistics stay positive-definite");
        let base = self
            .prior
            .log_marginal_stats(context)
            .expect("sampler statistics stay positive-definite");
        joint - base
    }
}

/// Constant likelihood: every point and block scores zero, which reduces the
/// sampler to its seating prior. Useful for simulating the partition prior
/// and for exercising the bookkeeping in isolation.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatLikelihood;

impl ObservationModel for FlatLikelihood {
    fn log_point(&self, _x: &DVector<f64>, _context: &GaussianSuffStats) -> f64 {
        0.0
    }

    fn log_block(&self, _block: &GaussianSuffStats, _context: &GaussianSuffStats) -> f64 {
        0.0
    }
}

/// Shape/rate Gamma prior over a concentration parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0 && rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!(
                "gamma prior needs positive shape and rate, got ({shape}, {rate})"
            )));
        }
        Ok(GammaPrior { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rand_distr::Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated shape and scale")
            .sample(rng)
    }
}

/// Concentration parameters of the franchise: `gamma` governs how easily new
/// dishes appear, `alpha0` how easily new tables open. Both carry vague
/// Gamma priors; by default inference fixes them at the prior means.
#[derive(Clone, Copy, Debug)]
pub struct HdpConcentrations {
    pub gamma: f64,
    pub alpha0: f64,
    pub gamma_prior: GammaPrior,
    pub alpha0_prior: GammaPrior,
}

impl Default for HdpConcentrations {
    fn default() -> Self {
        HdpConcentrations {
            gamma: 100.0,
            alpha0: 10.0,
            gamma_prior: GammaPrior {
                shape: 100.0,
                rate: 1.0,
            },
            alpha0_prior: GammaPrior {
                shape: 10.0,
                rate: 1.0,
            },
        }
    }
}

impl HdpConcentrations {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("alpha0", self.alpha0)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        GammaPrior::new(self.gamma_prior.shape, self.gamma_prior.rate)?;
        GammaPrior::new(self.alpha0_prior.shape, self.alpha0_prior.rate)?;
        Ok(())
    }
}

/// How [`draw_concentrations`] produces the per-sweep values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConcentrationDraw {
    /// Fix both values at their Gamma prior means.
    PriorMean,
    /// Draw both values fresh from their Gamma priors.
    Sampled,
}

/// Produces `(gamma, alpha0)` either fixed at the prior means or drawn from
/// the Gamma priors.
pub fn draw_concentrations<R: Rng + ?Sized>(
    conc: &HdpConcentrations,
    mode: ConcentrationDraw,
    rng: &mut R,
) -> (f64, f64) {
    match mode {
        ConcentrationDraw::PriorMean => (conc.gamma_prior.mean(), conc.alpha0_prior.mean()),
        ConcentrationDraw::Sampled => (conc.gamma_prior.draw(rng), conc.alpha0_prior.draw(rng)),
    }
}

/// Chain-level knobs for [`run_chain`].
#[derive(Clone, Copy, Debug)]
pub struct ChainOptions {
    /// Number of full sweeps; zero returns the initial state unchanged.
    pub sweeps: usize,
    /// Number of shared dishes the deterministic initialization spreads the
    /// data over.
    pub init_components: usize,
    /// Redraw the concentrations from their priors at the start of every
    /// sweep instead of holding them fixed.
    pub resample_concentrations: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            sweeps: 30,
            init_components: 30,
            resample_concentrations: false,
        }
    }
}

#[derive(Clone, Debug)]
struct Table {
    dish: DishId,
    members: usize,
    stats: GaussianSuffStats,
}

#[derive(Clone, Debug)]
struct Dish {
    tables: usize,
    stats: GaussianSuffStats,
}

/// Seating state of the franchise sampler.
///
/// Structural invariants, checkable with [`CrfState::check_consistency`]:
/// every instance sits at a live table of its group; table member counts and
/// statistics match the assignments; every table's dish is live; dish table
/// counts and statistics aggregate exactly the tables serving them; no table
/// is empty and no dish serves zero tables.
#[derive(Clone, Debug)]
pub struct CrfState {
    data: Arc<GroupedDataset>,
    table_of: Vec<Vec<TableId>>,
    tables: Vec<BTreeMap<TableId, Table>>,
    dishes: BTreeMap<DishId, Dish>,
    next_table_id: Vec<TableId>,
    next_dish_id: DishId,
    total_tables: usize,
    empty: GaussianSuffStats,
    stat_ops: usize,
}

impl CrfState {
    /// Deterministic initialization: the first `init_components` dish ids
    /// are created and each group deals its instances round-robin over
    /// `min(init_components, group size)` tables, table `l` serving dish
    /// `l`. Groups may be empty (they simply hold no tables); a dataset with
    /// no instances at all is rejected.
    pub fn init(data: Arc<GroupedDataset>, init_components: usize) -> Result<Self> {
        if init_components == 0 {
            return Err(Error::invalid("init_components must be at least 1"));
        }
        if data.total_len() == 0 {
            return Err(Error::empty("no instances across all groups"));
        }
        let dim = data.dim();
        let num_groups = data.num_groups();
        let mut state = CrfState {
            data: Arc::clone(&data),
            table_of: (0..num_groups)
                .map(|j| vec![UNSEATED; data.group_len(j)])
                .collect(),
            tables: (0..num_groups).map(|_| BTreeMap::new()).collect(),
            dishes: BTreeMap::new(),
            next_table_id: vec![0; num_groups],
            next_dish_id: 0,
            total_tables: 0,
            empty: GaussianSuffStats::new(dim),
            stat_ops: 0,
        };
        for j in 0..num_groups {
            let n_j = data.group_len(j);
            let spread = init_components.min(n_j);
            for l in 0..spread {
                let dish = l as DishId;
                state.dishes.entry(dish).or_insert_with(|| Dish {
                    tables: 0,
                    stats: GaussianSuffStats::new(dim),
                });
                state.next_dish_id = state.next_dish_id.max(dish + 1);
                let t = state.fresh_table_id(j);
                state.tables[j].insert(
                    t,
                    Table {
                        dish,
                        members: 0,
                        stats: GaussianSuffStats::new(dim),
                    },
                );
                state.dishes.get_mut(&dish).expect("just inserted").tables += 1;
                state.total_tables += 1;
            }
            for i in 0..n_j {
                let t = (i % spread) as TableId;
                state.attach_instance(j, i, t);
            }
        }
        state.stat_ops = 0;
        Ok(state)
    }

    fn fresh_table_id(&mut self, j: usize) -> TableId {
        let id = self.next_table_id[j];
        self.next_table_id[j] += 1;
        id
    }

    fn fresh_dish_id(&mut self) -> DishId {
        let id = self.next_dish_id;
        self.next_dish_id += 1;
        id
    }

    fn attach_instance(&mut self, j: usize, i: usize, t: TableId) {
        let data = Arc::clone(&self.data);
        let x = data.point(j, i);
        let table = self.tables[j].get_mut(&t).expect("attach to live table");
        table.members += 1;
        table.stats.add(x);
        let dish = table.dish;
        self.dishes
            .get_mut(&dish)
            .expect("table serves live dish")
            .stats
            .add(x);
        self.table_of[j][i] = t;
        self.stat_ops += 2;
    }

    /// Removes instance `(j, i)` from its table, dropping the table if it
    /// empties and the dish if that leaves it serving no tables.
    fn detach_instance(&mut self, j: usize, i: usize) {
        let t = self.table_of[j][i];
        debug_assert_ne!(t, UNSEATED, "detach of unseated instance");
        let data = Arc::clone(&self.data);
        let x = data.point(j, i);
        let table = self.tables[j]
            .get_mut(&t)
            .expect("instance sits at live table");
        table.members -= 1;
        let emptied = table.members == 0;
        if !emptied {
            table.stats.remove(x);
        }
        let dish = table.dish;
        {
            let d = self.dishes.get_mut(&dish).expect("table serves live dish");
            d.stats.remove(x);
        }
        self.stat_ops += 2;
        if emptied {
            self.tables[j].remove(&t);
            self.total_tables -= 1;
            let orphaned = {
                let d = self.dishes.get_mut(&dish).expect("dish still live");
                d.tables -= 1;
                d.tables == 0
            };
            if orphaned {
                self.dishes.remove(&dish);
            }
        }
        self.table_of[j][i] = UNSEATED;
    }

    /// Log prior mass of the dish mixture a new table draws its dish from:
    /// one entry per live dish in ascending id order, then the new-dish
    /// entry. The exponentials sum to one: `m_k / (m + gamma)` per dish and
    /// `gamma / (m + gamma)` for a new dish.
    pub fn dish_mixture_log_prior(&self, gamma: f64) -> (Vec<DishId>, Vec<f64>) {
        let ln_denom = (self.total_tables as f64 + gamma).ln();
        let mut ids = Vec::with_capacity(self.dishes.len());
        let mut log_w = Vec::with_capacity(self.dishes.len() + 1);
        for (&k, dish) in &self.dishes {
            ids.push(k);
            log_w.push((dish.tables as f64).ln() - ln_denom);
        }
        log_w.push(gamma.ln() - ln_denom);
        (ids, log_w)
    }

    /// Resamples the table of instance `(j, i)` from its full conditional.
    pub fn sample_table<M: ObservationModel, R: Rng + ?Sized>(
        &mut self,
        model: &M,
        gamma: f64,
        alpha0: f64,
        j: usize,
        i: usize,
        rng: &mut R,
    ) {
        let data = Arc::clone(&self.data);
        let x = data.point(j, i);
        self.detach_instance(j, i);

        // Per-dish point predictives, reused for both the table weights and
        // the new-table dish mixture.
        let mut dish_pred: BTreeMap<DishId, f64> = BTreeMap::new();
        for (&k, dish) in &self.dishes {
            dish_pred.insert(k, model.log_point(x, &dish.stats));
        }
        let new_dish_pred = model.log_point(x, &self.empty);

        let (mixture_ids, mut mixture_log_w) = self.dish_mixture_log_prior(gamma);
        for (slot, k) in mixture_ids.iter().enumerate() {
            mixture_log_w[slot] += dish_pred[k];
        }
        *mixture_log_w.last_mut().expect("new-dish entry") += new_dish_pred;

        // Candidate order mirrors `table_ids`: both iterate the group's
        // table map in ascending id order.
        let table_ids: Vec<TableId> = self.tables[j].keys().copied().collect();
        let mut candidates: Vec<f64> = Vec::with_capacity(table_ids.len() + 1);
        for table in self.tables[j].values() {
            candidates.push((table.members as f64).ln() + dish_pred[&table.dish]);
        }
        candidates.push(alpha0.ln() + log_sum_exp(&mixture_log_w));

        let choice = sample_log_weights(&candidates, rng);
        let t = if choice < table_ids.len() {
            table_ids[choice]
        } else {
            let dish_choice = sample_log_weights(&mixture_log_w, rng);
            let dish = if dish_choice < mixture_ids.len() {
                mixture_ids[dish_choice]
            } else {
                let k = self.fresh_dish_id();
                self.dishes.insert(
                    k,
                    Dish {
                        tables: 0,
                        stats: GaussianSuffStats::new(self.data.dim()),
                    },
                );
                k
            };
            let t = self.fresh_table_id(j);
            self.tables[j].insert(
                t,
                Table {
                    dish,
                    members: 0,
                    stats: GaussianSuffStats::new(self.data.dim()),
                },
            );
            self.dishes
                .get_mut(&dish)
                .expect("dish just ensured")
                .tables += 1;
            self.total_tables += 1;
            t
        };
        self.attach_instance(j, i, t);
    }

    /// Resamples the dish of table `(j, t)` from its full conditional. The
    /// table's current dish is first released (and deleted if orphaned), so
    /// a table holding the last copy of a dish may come back with a fresh
    /// dish id.
    pub fn sample_dish<M: ObservationModel, R: Rng + ?Sized>(
        &mut self,
        model: &M,
        gamma: f64,
        j: usize,
        t: TableId,
        rng: &mut R,
    ) {
        let (old_dish, block) = {
            let table = self.tables[j].get(&t).expect("sample_dish of live table");
            (table.dish, table.stats.clone())
        };
        let orphaned = {
            let d = self
                .dishes
                .get_mut(&old_dish)
                .expect("table serves live dish");
            d.tables -= 1;
            if d.tables > 0 {
                d.stats.remove_stats(&block);
            }
            d.tables == 0
        };
        if orphaned {
            self.dishes.remove(&old_dish);
        } else {
            self.stat_ops += 1;
        }
        self.total_tables -= 1;

        let mut dish_ids: Vec<DishId> = Vec::with_capacity(self.dishes.len());
        let mut log_w: Vec<f64> = Vec::with_capacity(self.dishes.len() + 1);
        for (&k, dish) in &self.dishes {
            dish_ids.push(k);
            log_w.push((dish.tables as f64).ln() + model.log_block(&block, &dish.stats));
        }
        log_w.push(gamma.ln() + model.log_block(&block, &self.empty));

        let choice = sample_log_weights(&log_w, rng);
        let dish = if choice < dish_ids.len() {
            dish_ids[choice]
        } else {
            let k = self.fresh_dish_id();
            self.dishes.insert(
                k,
                Dish {
                    tables: 0,
                    stats: GaussianSuffStats::new(self.data.dim()),
                },
            );
            k
        };
        let d = self.dishes.get_mut(&dish).expect("dish just ensured");
        d.tables += 1;
        d.stats.add_stats(&block);
        self.stat_ops += 1;
        self.total_tables += 1;
        self.tables[j].get_mut(&t).expect("table still live").dish = dish;
    }

    /// One full sweep: every instance's table in group-then-index order,
    /// then every live table's dish in group-then-id order.
    pub fn gibbs_sweep<M: ObservationModel, R: Rng + ?Sized>(
        &mut self,
        model: &M,
        gamma: f64,
        alpha0: f64,
        rng: &mut R,
    ) {
        for j in 0..self.data.num_groups() {
            for i in 0..self.data.group_len(j) {
                self.sample_table(model, gamma, alpha0, j, i, rng);
            }
        }
        for j in 0..self.data.num_groups() {
            let ids: Vec<TableId> = self.tables[j].keys().copied().collect();
            for t in ids {
                self.sample_dish(model, gamma, j, t, rng);
            }
        }
    }

    /// Rebuilds every table and dish statistic from raw points once enough
    /// incremental updates have accumulated. Called between sweeps.
    pub fn maybe_refresh(&mut self) {
        if self.stat_ops >= REFRESH_INTERVAL {
            self.refresh_stats();
        }
    }

    /// Unconditionally rebuilds all sufficient statistics from raw points.
    pub fn refresh_stats(&mut self) {
        let data = Arc::clone(&self.data);
        let dim = data.dim();
        for dish in self.dishes.values_mut() {
            dish.stats = GaussianSuffStats::new(dim);
        }
        for j in 0..data.num_groups() {
            for table in self.tables[j].values_mut() {
                table.stats = GaussianSuffStats::new(dim);
            }
            for i in 0..data.group_len(j) {
                let t = self.table_of[j][i];
                let table = self.tables[j]
                    .get_mut(&t)
                    .expect("assignment to live table");
                table.stats.add(data.point(j, i));
                let dish = table.dish;
                self.dishes
                    .get_mut(&dish)
                    .expect("table serves live dish")
                    .stats
                    .add(data.point(j, i));
            }
        }
        self.stat_ops = 0;
    }

    /// Verifies every structural invariant against a from-scratch recount,
    /// with sufficient statistics compared to `tol` in max-absolute terms.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        let data = &self.data;
        let mut seen_tables: Vec<BTreeMap<TableId, (usize, GaussianSuffStats)>> =
            (0..data.num_groups()).map(|_| BTreeMap::new()).collect();
        for (j, seen) in seen_tables.iter_mut().enumerate() {
            if self.table_of[j].len() != data.group_len(j) {
                return Err(Error::invalid(format!("group {j} assignment length")));
            }
            for i in 0..data.group_len(j) {
                let t = self.table_of[j][i];
                if !self.tables[j].contains_key(&t) {
                    return Err(Error::invalid(format!(
                        "instance ({j}, {i}) assigned to dead table {t}"
                    )));
                }
                let entry = seen
                    .entry(t)
                    .or_insert_with(|| (0, GaussianSuffStats::new(data.dim())));
                entry.0 += 1;
                entry.1.add(data.point(j, i));
            }
        }
        let mut dish_tables: BTreeMap<DishId, usize> = BTreeMap::new();
        let mut dish_stats: BTreeMap<DishId, GaussianSuffStats> = BTreeMap::new();
        let mut total = 0usize;
        for (j, seen) in seen_tables.iter().enumerate() {
            if self.tables[j].keys().ne(seen.keys()) {
                return Err(Error::invalid(format!(
                    "group {j} live tables disagree with assignments"
                )));
            }
            for (&t, table) in &self.tables[j] {
                let (count, stats) = &seen[&t];
                if table.members == 0 {
                    return Err(Error::invalid(format!("empty table ({j}, {t})")));
                }
                if table.members != *count {
                    return Err(Error::invalid(format!(
                        "table ({j}, {t}) members {} but {count} assigned",
                        table.members
                    )));
                }
                if (table.stats.sum() - stats.sum()).amax() > tol
                    || (table.stats.scatter() - stats.scatter()).amax() > tol
                {
                    return Err(Error::invalid(format!(
                        "table ({j}, {t}) statistics drifted beyond {tol}"
                    )));
                }
                if !self.dishes.contains_key(&table.dish) {
                    return Err(Error::invalid(format!(
                        "table ({j}, {t}) serves dead dish {}",
                        table.dish
                    )));
                }
                *dish_tables.entry(table.dish).or_insert(0) += 1;
                dish_stats
                    .entry(table.dish)
                    .or_insert_with(|| GaussianSuffStats::new(data.dim()))
                    .add_stats(stats);
                total += 1;
                if t >= self.next_table_id[j] {
                    return Err(Error::invalid(format!(
                        "table id {t} at or beyond group {j} cursor"
                    )));
                }
            }
        }
        if self.dishes.keys().ne(dish_tables.keys()) {
            return Err(Error::invalid(
                "live dishes disagree with tables".to_string(),
            ));
        }
        for (&k, dish) in &self.dishes {
            if dish.tables != dish_tables[&k] {
                return Err(Error::invalid(format!(
                    "dish {k} table count {} but {} serving",
                    dish.tables, dish_tables[&k]
                )));
            }
            let rebuilt = &dish_stats[&k];
            if dish.stats.count() != rebuilt.count()
                || (dish.stats.sum() - rebuilt.sum()).amax() > tol
                || (dish.stats.scatter() - rebuilt.scatter()).amax() > tol
            {
                return Err(Error::invalid(format!(
                    "dish {k} statistics drifted beyond {tol}"
                )));
            }
            if k >= self.next_dish_id {
                return Err(Error::invalid(format!("dish id {k} at or beyond cursor")));
            }
        }
        if total != self.total_tables {
            return Err(Error::invalid(format!(
                "total tables {} but {total} live",
                self.total_tables
            )));
        }
        Ok(())
    }

    pub fn data(&self) -> &GroupedDataset {
        &self.data
    }

    /// Number of live dishes (mixture components).
    pub fn num_dishes(&self) -> usize {
        self.dishes.len()
    }

    /// Total number of tables across groups.
    pub fn total_tables(&self) -> usize {
        self.total_tables
    }

    pub fn dish_ids(&self) -> Vec<DishId> {
        self.dishes.keys().copied().collect()
    }

    pub fn dish_table_count(&self, k: DishId) -> usize {
        self.dishes.get(&k).map_or(0, |d| d.tables)
    }

    pub fn dish_stats(&self, k: DishId) -> Option<&GaussianSuffStats> {
        self.dishes.get(&k).map(|d| &d.stats)
    }

    pub fn group_table_ids(&self, j: usize) -> Vec<TableId> {
        self.tables[j].keys().copied().collect()
    }

    pub fn table_members(&self, j: usize, t: TableId) -> usize {
        self.tables[j].get(&t).map_or(0, |table| table.members)
    }

    pub fn table_dish(&self, j: usize, t: TableId) -> Option<DishId> {
        self.tables[j].get(&t).map(|table| table.dish)
    }

    /// Tables of group `j` currently serving dish `k`.
    pub fn tables_serving(&self, j: usize, k: DishId) -> usize {
        self.tables[j]
            .values()
            .filter(|table| table.dish == k)
            .count()
    }

    pub fn table_of_instance(&self, j: usize, i: usize) -> TableId {
        self.table_of[j][i]
    }

    /// Dish of the table instance `(j, i)` sits at.
    pub fn dish_of_instance(&self, j: usize, i: usize) -> DishId {
        let t = self.table_of[j][i];
        self.tables[j][&t].dish
    }

    /// Instance count per dish within group `j`, ascending dish id.
    pub fn group_dish_counts(&self, j: usize) -> BTreeMap<DishId, usize> {
        let mut counts = BTreeMap::new();
        for i in 0..self.data.group_len(j) {
            *counts.entry(self.dish_of_instance(j, i)).or_insert(0) += 1;
        }
        counts
    }
}

/// Initializes a state and runs `opts.sweeps` full Gibbs sweeps with the
/// given component model, logging per-sweep component counts at debug level.
pub fn run_chain<M: ObservationModel, R: Rng + ?Sized>(
    data: Arc<GroupedDataset>,
    model: &M,
    conc: &HdpConcentrations,
    opts: &ChainOptions,
    rng: &mut R,
) -> Result<CrfState> {
    conc.validate()?;
    let mut state = CrfState::init(data, opts.init_components)?;
    for sweep in 1..=opts.sweeps {
        let (gamma, alpha0) = if opts.resample_concentrations {
            draw_concentrations(conc, ConcentrationDraw::Sampled, rng)
        } else {
            (conc.gamma, conc.alpha0)
        };
        state.gibbs_sweep(model, gamma, alpha0, rng);
        log::debug!(
            "sweep {sweep}/{}: dishes={} tables={}",
            opts.sweeps,
            state.num_dishes(),
            state.total_tables()
        );
        state.maybe_refresh();
    }
    Ok(state)
}
