//! Persistent q×q torus of workers.
//!
//! Each worker owns two inboxes (A-tiles, B-tiles) and holds the only sender
//! into its left neighbour's A-inbox and its upper neighbour's B-inbox. No
//! matrix state is shared; tiles move by value through the channels.

use std::any::Any;
use std::panic::{self, AssertUnwindSafe};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use super::barrier::RoundBarrier;
use super::grid::{aligned_a_source, aligned_b_source, BlockGrid};
use super::Fault;
use crate::densela::{gemm_acc, ComplexMatrix};
use crate::error::{Error, Result};

/// A block in flight, tagged with its position in the source matrix.
struct Tile {
    origin: (usize, usize),
    data: ComplexMatrix,
}

struct Job {
    a: Tile,
    b: Tile,
}

/// What one worker hands back after its rounds.
#[derive(Debug)]
pub(crate) struct WorkerOutcome {
    pub pos: (usize, usize),
    pub c: ComplexMatrix,
    /// Origins of the tiles held once all rounds and shifts are done.
    pub held_a: (usize, usize),
    pub held_b: (usize, usize),
}

type Report = std::result::Result<WorkerOutcome, String>;

struct Worker {
    pos: (usize, usize),
    q: usize,
    jobs: Receiver<Job>,
    a_in: Receiver<Tile>,
    b_in: Receiver<Tile>,
    a_out: Sender<Tile>,
    b_out: Sender<Tile>,
    barrier: Arc<RoundBarrier>,
    reports: Sender<Report>,
    fault: Option<Fault>,
}

impl Worker {
    fn run(self) {
        while let Ok(job) = self.jobs.recv() {
            let report = match panic::catch_unwind(AssertUnwindSafe(|| self.rounds(job))) {
                Ok(r) => r,
                Err(payload) => Err(format!("worker {:?} panicked: {}", self.pos, panic_message(&*payload))),
            };
            let failed = report.is_err();
            if failed {
                self.barrier.break_barrier();
            }
            let _ = self.reports.send(report);
            if failed {
                // Exiting drops our senders, which unblocks any neighbour
                // still waiting on a tile from us.
                return;
            }
        }
    }

    fn rounds(&self, job: Job) -> Report {
        let Job { mut a, mut b } = job;
        let bd = a.data.dim();
        let mut c = ComplexMatrix::zeros(bd);
        for round in 0..self.q {
            if let Some(Fault::WorkerPanic { row, col, round: bad }) = self.fault {
                if (row, col) == self.pos && round == bad {
                    panic!("injected fault");
                }
            }
            gemm_acc(bd, a.data.as_slice(), b.data.as_slice(), c.as_mut_slice());
            self.a_out
                .send(a)
                .map_err(|_| format!("worker {:?}: A-neighbour hung up", self.pos))?;
            self.b_out
                .send(b)
                .map_err(|_| format!("worker {:?}: B-neighbour hung up", self.pos))?;
            a = self
                .a_in
                .recv()
                .map_err(|_| format!("worker {:?}: no A-tile in round {round}", self.pos))?;
            b = self
                .b_in
                .recv()
                .map_err(|_| format!("worker {:?}: no B-tile in round {round}", self.pos))?;
            self.barrier
                .wait()
                .map_err(|_| format!("worker {:?}: barrier broken in round {round}", self.pos))?;
        }
        Ok(WorkerOutcome {
            pos: self.pos,
            c,
            held_a: a.origin,
            held_b: b.origin,
        })
    }
}

fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

pub(crate) struct WorkerGrid {
    q: usize,
    jobs: Vec<Sender<Job>>,
    reports: Receiver<Report>,
    handles: Vec<JoinHandle<()>>,
    poisoned: bool,
}

impl WorkerGrid {
    pub(crate) fn spawn(q: usize, fault: Option<Fault>) -> Result<Self> {
        assert!(q >= 1);
        let count = q * q;
        let barrier = Arc::new(RoundBarrier::new(count));
        let (report_tx, reports) = mpsc::channel();

        let (mut a_tx, a_rx): (Vec<_>, Vec<_>) = (0..count).map(|_| mpsc::channel::<Tile>()).unzip();
        let (mut b_tx, b_rx): (Vec<_>, Vec<_>) = (0..count).map(|_| mpsc::channel::<Tile>()).unzip();
        let reversed = matches!(fault, Some(Fault::ReversedShift));

        let mut jobs = Vec::with_capacity(count);
        let mut handles = Vec::with_capacity(count);
        let mut a_rx_slots: Vec<Option<Receiver<Tile>>> = a_rx.into_iter().map(Some).collect();
        let mut b_rx_slots: Vec<Option<Receiver<Tile>>> = b_rx.into_iter().map(Some).collect();
        for i in 0..q {
            for j in 0..q {
                let left = if reversed { (j + 1) % q } else { (j + q - 1) % q };
                let up = (i + q - 1) % q;
                let (job_tx, job_rx) = mpsc::channel();
                let worker = Worker {
                    pos: (i, j),
                    q,
                    jobs: job_rx,
                    a_in: a_rx_slots[i * q + j].take().expect("inbox handed out twice"),
                    b_in: b_rx_slots[i * q + j].take().expect("inbox handed out twice"),
                    a_out: a_tx[i * q + left].clone(),
                    b_out: b_tx[up * q + j].clone(),
                    barrier: Arc::clone(&barrier),
                    reports: report_tx.clone(),
                    fault,
                };
                let handle = thread::Builder::new()
                    .name(format!("cannon-{i}-{j}"))
                    .spawn(move || worker.run())
                    .map_err(|e| Error::WorkerFailed(format!("could not spawn worker ({i}, {j}): {e}")))?;
                jobs.push(job_tx);
                handles.push(handle);
            }
        }
        // Workers now hold the only inbox senders.
        a_tx.clear();
        b_tx.clear();
        Ok(Self {
            q,
            jobs,
            reports,
            handles,
            poisoned: false,
        })
    }

    pub(crate) fn q(&self) -> usize {
        self.q
    }

    /// Runs the shift-multiply-accumulate rounds on already aligned grids.
    pub(crate) fn run(&mut self, mut a: BlockGrid, mut b: BlockGrid) -> Result<Vec<WorkerOutcome>> {
        if self.poisoned {
            return Err(Error::WorkerFailed("worker grid is unusable after an earlier failure".into()));
        }
        let q = self.q;
        debug_assert_eq!(a.q(), q);
        // Build every job before dispatching any, so a malformed grid never
        // leaves part of the torus running.
        let mut pending = Vec::with_capacity(q * q);
        for i in 0..q {
            for j in 0..q {
                let a_block = a.take_block(i, j).ok_or(Error::MissingBlock { row: i, col: j })?;
                let b_block = b.take_block(i, j).ok_or(Error::MissingBlock { row: i, col: j })?;
                pending.push(Job {
                    a: Tile {
                        origin: aligned_a_source(i, j, q),
                        data: a_block,
                    },
                    b: Tile {
                        origin: aligned_b_source(i, j, q),
                        data: b_block,
                    },
                });
            }
        }
        for (k, job) in pending.into_iter().enumerate() {
            if self.jobs[k].send(job).is_err() {
                self.poisoned = true;
                return Err(Error::WorkerFailed(format!("worker ({}, {}) is gone", k / q, k % q)));
            }
        }

        let mut outcomes = Vec::with_capacity(q * q);
        let mut failure: Option<String> = None;
        for _ in 0..q * q {
            match self.reports.recv() {
                Ok(Ok(outcome)) => outcomes.push(outcome),
                Ok(Err(msg)) => {
                    failure.get_or_insert(msg);
                }
                Err(_) => {
                    failure.get_or_insert_with(|| "all workers exited".to_string());
                    break;
                }
            }
        }
        if let Some(msg) = failure {
            self.poisoned = true;
            return Err(Error::WorkerFailed(msg));
        }
        Ok(outcomes)
    }
}

impl Drop for WorkerGrid {
    fn drop(&mut self) {
        self.jobs.clear();
        for handle in self.handles.drain(..) {
            let _ = handle.join();
        }
    }
}
