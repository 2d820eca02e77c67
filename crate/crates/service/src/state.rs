//! Session registries and the sequential job worker.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::Serialize;
use umap_lens::{
    apply_lens, build_manifold, optimize_layout_with_progress, spectral_init, Dataset, DistanceMetric, Embedding,
    InitMode, LayoutParams, LensSpec, Manifold,
};

use crate::error::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running { progress: f64 },
    Done { result_id: String },
    Failed { message: String },
}

impl JobStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobStatus::Done { .. } | JobStatus::Failed { .. })
    }
}

/// A registry entry whose value is produced by a job.
#[derive(Debug, Clone)]
pub enum Slot<T> {
    Pending { job_id: String },
    Ready(Arc<T>),
    Failed { message: String },
}

#[derive(Debug, Clone)]
pub struct ModelEntry {
    pub dataset_id: String,
    pub parent: Option<String>,
    pub lens: Option<LensSpec>,
    pub metric: DistanceMetric,
    pub k: usize,
    pub manifold: Slot<Manifold>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingEntry {
    pub model_id: String,
    pub embedding: Slot<Embedding>,
}

#[derive(Debug, Clone)]
pub enum LayoutInit {
    Spectral,
    Warm(String),
}

impl std::str::FromStr for LayoutInit {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "spectral" => Ok(LayoutInit::Spectral),
            Some(("warm", id)) if !id.is_empty() => Ok(LayoutInit::Warm(id.to_string())),
            _ => Err(ServiceError::BadRequest(format!("init must be `spectral` or `warm:<embedding_id>`, got `{s}`"))),
        }
    }
}

enum Task {
    Model { model_id: String, data: Arc<Dataset>, metric: DistanceMetric, k: usize },
    Lens { model_id: String, parent: Arc<Manifold>, data: Arc<Dataset>, spec: LensSpec },
    Layout { embedding_id: String, manifold: Arc<Manifold>, init: Option<Arc<Embedding>>, params: LayoutParams },
}

struct Job {
    id: String,
    task: Task,
}

#[derive(Default)]
pub struct Session {
    pub datasets: BTreeMap<String, Arc<Dataset>>,
    pub models: BTreeMap<String, ModelEntry>,
    pub embeddings: BTreeMap<String, EmbeddingEntry>,
    pub jobs: BTreeMap<String, JobStatus>,
    next_id: u64,
}

impl Session {
    fn fresh_id(&mut self, prefix: &str) -> String {
        self.next_id += 1;
        format!("{prefix}{}", self.next_id)
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, ServiceError> {
        self.datasets.get(id).cloned().ok_or_else(|| ServiceError::NotFound(format!("dataset `{id}`")))
    }

    pub fn model(&self, id: &str) -> Result<&ModelEntry, ServiceError> {
        self.models.get(id).ok_or_else(|| ServiceError::NotFound(format!("model `{id}`")))
    }

    pub fn ready_model(&self, id: &str) -> Result<Arc<Manifold>, ServiceError> {
        ready(&self.model(id)?.manifold, "model", id)
    }

    pub fn ready_embedding(&self, id: &str) -> Result<Arc<Embedding>, ServiceError> {
        let e = self.embeddings.get(id).ok_or_else(|| ServiceError::NotFound(format!("embedding `{id}`")))?;
        ready(&e.embedding, "embedding", id)
    }

    /// Path from `id` up to its root, starting with `id`.
    pub fn lineage(&self, id: &str) -> Result<Vec<(String, &ModelEntry)>, ServiceError> {
        let mut out = Vec::new();
        let mut cur = Some(id.to_string());
        while let Some(m) = cur {
            let entry = self.model(&m)?;
            cur = entry.parent.clone();
            out.push((m, entry));
        }
        Ok(out)
    }
}

fn ready<T>(slot: &Slot<T>, what: &str, id: &str) -> Result<Arc<T>, ServiceError> {
    match slot {
        Slot::Ready(v) => Ok(v.clone()),
        Slot::Pending { job_id } => Err(ServiceError::NotReady(format!("{what} `{id}` is waiting on job `{job_id}`"))),
        Slot::Failed { message } => Err(ServiceError::NotReady(format!("{what} `{id}` failed: {message}"))),
    }
}

/// Shared session plus the queue feeding its single compute worker.
#[derive(Clone)]
pub struct AppState {
    pub session: Arc<RwLock<Session>>,
    queue: mpsc::Sender<Job>,
}

impl Default for AppState {
    fn default() -> Self {
        Self::new()
    }
}

impl AppState {
    /// Starts the worker thread; it exits once every handle is dropped.
    pub fn new() -> Self {
        let session = Arc::new(RwLock::new(Session::default()));
        let (tx, rx) = mpsc::channel::<Job>();
        let worker = session.clone();
        std::thread::Builder::new()
            .name("umap-lens-jobs".into())
            .spawn(move || {
                for job in rx {
                    run_job(&worker, job);
                }
            })
            .expect("spawn job worker");
        AppState { session, queue: tx }
    }

    pub fn add_dataset(&self, id: Option<String>, data: Dataset) -> String {
        let mut s = self.session.write();
        let id = id.unwrap_or_else(|| s.fresh_id("d"));
        s.datasets.insert(id.clone(), Arc::new(data));
        id
    }

    pub fn submit_model(&self, dataset_id: &str, metric: DistanceMetric, k: usize) -> Result<(String, String), ServiceError> {
        let mut s = self.session.write();
        let data = s.dataset(dataset_id)?;
        let n = data.features().n_rows();
        if data.features().n_cols() == 0 {
            return Err(ServiceError::BadRequest("dataset has no feature columns".into()));
        }
        if k == 0 || k >= n {
            return Err(ServiceError::BadRequest(format!("n_neighbors must be in 1..{n}, got {k}")));
        }
        let model_id = s.fresh_id("m");
        let job_id = s.fresh_id("j");
        s.models.insert(
            model_id.clone(),
            ModelEntry {
                dataset_id: dataset_id.to_string(),
                parent: None,
                lens: None,
                metric,
                k,
                manifold: Slot::Pending { job_id: job_id.clone() },
            },
        );
        self.enqueue(&mut s, job_id.clone(), Task::Model { model_id: model_id.clone(), data, metric, k });
        Ok((job_id, model_id))
    }

    pub fn submit_lens(&self, parent_id: &str, spec: LensSpec) -> Result<(String, String), ServiceError> {
        let mut s = self.session.write();
        let parent_entry = s.model(parent_id)?.clone();
        let parent = s.ready_model(parent_id)?;
        let data = s.dataset(&parent_entry.dataset_id)?;
        spec.validate(&data).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let model_id = s.fresh_id("m");
        let job_id = s.fresh_id("j");
        s.models.insert(
            model_id.clone(),
            ModelEntry {
                parent: Some(parent_id.to_string()),
                lens: Some(spec.clone()),
                manifold: Slot::Pending { job_id: job_id.clone() },
                ..parent_entry
            },
        );
        self.enqueue(&mut s, job_id.clone(), Task::Lens { model_id: model_id.clone(), parent, data, spec });
        Ok((job_id, model_id))
    }

    pub fn submit_layout(
        &self,
        model_id: &str,
        params: LayoutParams,
        init: LayoutInit,
    ) -> Result<(String, String), ServiceError> {
        let mut s = self.session.write();
        let manifold = s.ready_model(model_id)?;
        let init = match init {
            LayoutInit::Spectral => None,
            LayoutInit::Warm(id) => {
                let e = s.ready_embedding(&id)?;
                if e.len() != manifold.n_vertices() {
                    return Err(ServiceError::BadRequest(format!(
                        "embedding `{id}` has {} points, model has {}",
                        e.len(),
                        manifold.n_vertices()
                    )));
                }
                Some(e)
            }
        };
        if manifold.n_vertices() == 0 {
            return Err(ServiceError::BadRequest("model has no vertices".into()));
        }
        params.validate().and_then(|_| params.curve()).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let embedding_id = s.fresh_id("e");
        let job_id = s.fresh_id("j");
        s.embeddings.insert(
            embedding_id.clone(),
            EmbeddingEntry { model_id: model_id.to_string(), embedding: Slot::Pending { job_id: job_id.clone() } },
        );
        self.enqueue(&mut s, job_id.clone(), Task::Layout { embedding_id: embedding_id.clone(), manifold, init, params });
        Ok((job_id, embedding_id))
    }

    fn enqueue(&self, s: &mut Session, id: String, task: Task) {
        s.jobs.insert(id.clone(), JobStatus::Pending);
        if self.queue.send(Job { id: id.clone(), task }).is_err() {
            s.jobs.insert(id, JobStatus::Failed { message: "job worker stopped".into() });
        }
    }
}

fn set_progress(session: &RwLock<Session>, job_id: &str, progress: f64) {
    let mut s = session.write();
    if let Some(status) = s.jobs.get_mut(job_id) {
        let current = match status {
            JobStatus::Pending => 0.0,
            JobStatus::Running { progress } => *progress,
            _ => return,
        };
        *status = JobStatus::Running { progress: progress.clamp(current, 1.0) };
    }
}

fn run_job(session: &RwLock<Session>, job: Job) {
    set_progress(session, &job.id, 0.0);
    log::info!("job {} started", job.id);
    match job.task {
        Task::Model { model_id, data, metric, k } => {
            let result = build_manifold(&data.features(), k, metric).map_err(|e| e.to_string());
            finish_model(session, &job.id, &model_id, result);
        }
        Task::Lens { model_id, parent, data, spec } => {
            let result = apply_lens(&parent, &spec, &data).map_err(|e| e.to_string());
            finish_model(session, &job.id, &model_id, result);
        }
        Task::Layout { embedding_id, manifold, init, params } => {
            let result = (|| {
                let init = match init {
                    Some(prev) => Embedding { init: InitMode::WarmStart, ..(*prev).clone() },
                    None => spectral_init(&manifold, params.seed)?,
                };
                optimize_layout_with_progress(&manifold, &init, &params, &mut |done, total| {
                    if total > 0 {
                        set_progress(session, &job.id, done as f64 / total as f64);
                    }
                })
            })()
            .map_err(|e| e.to_string());
            let mut s = session.write();
            let (slot, status) = outcome(result, &embedding_id);
            if let Some(entry) = s.embeddings.get_mut(&embedding_id) {
                entry.embedding = slot;
            }
            s.jobs.insert(job.id.clone(), status);
        }
    }
    log::info!("job {} finished", job.id);
}

fn finish_model(session: &RwLock<Session>, job_id: &str, model_id: &str, result: Result<Manifold, String>) {
    let mut s = session.write();
    let (slot, status) = outcome(result, model_id);
    if let Some(entry) = s.models.get_mut(model_id) {
        entry.manifold = slot;
    }
    s.jobs.insert(job_id.to_string(), status);
}

fn outcome<T>(result: Result<T, String>, id: &str) -> (Slot<T>, JobStatus) {
    match result {
        Ok(v) => (Slot::Ready(Arc::new(v)), JobStatus::Done { result_id: id.to_string() }),
        Err(message) => (Slot::Failed { message: message.clone() }, JobStatus::Failed { message }),
    }
}
