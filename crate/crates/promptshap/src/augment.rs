//! Live prompt-augmentation utility: accuracy of a model prompted with a
//! coalition's exemplars.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use promptshap_core::{Coalition, OracleError, Utility};

use crate::cache::ResponseCache;
use crate::client::{CompletionRequest, ModelClient};
use crate::error::Error;
use crate::extract::{extract_answer, TaskKind};
use crate::formats::{LiveInstance, PromptManifest};

/// `U(S)` = fraction of questions whose extracted answer equals the gold answer.
///
/// The empty coalition is a zero-shot query, so this oracle defines its own
/// `U(∅)`. A failed request aborts the whole coalition.
pub struct AugmentationUtility<'a> {
    client: &'a ModelClient,
    cache: &'a ResponseCache,
    manifest: &'a PromptManifest,
    questions: &'a [LiveInstance],
    task: TaskKind,
    last_error: Mutex<Option<Error>>,
}

impl<'a> AugmentationUtility<'a> {
    pub fn new(
        client: &'a ModelClient,
        cache: &'a ResponseCache,
        manifest: &'a PromptManifest,
        questions: &'a [LiveInstance],
        task: TaskKind,
    ) -> Self {
        Self { client, cache, manifest, questions, task, last_error: Mutex::new(None) }
    }

    /// The most recent request failure, with its original error class.
    pub fn take_last_error(&self) -> Option<Error> {
        self.last_error.lock().unwrap().take()
    }

    fn answer(&self, coalition: &Coalition, q: &LiveInstance) -> crate::error::Result<bool> {
        let req = CompletionRequest::for_coalition(self.manifest, coalition, &q.question, self.client.config());
        let text = self.client.complete(&req, self.cache)?;
        Ok(extract_answer(&text, self.task).as_deref() == Some(q.answer.as_str()))
    }

    /// Number of correctly answered questions.
    pub fn correct(&self, coalition: &Coalition) -> crate::error::Result<usize> {
        let workers = self.client.config().max_in_flight.clamp(1, self.questions.len().max(1));
        let next = AtomicUsize::new(0);
        let correct = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let first_error: Mutex<Option<(usize, Error)>> = Mutex::new(None);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if abort.load(Ordering::SeqCst) {
                        return;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(q) = self.questions.get(i) else { return };
                    match self.answer(coalition, q) {
                        Ok(hit) => {
                            correct.fetch_add(usize::from(hit), Ordering::SeqCst);
                        }
                        Err(e) => {
                            abort.store(true, Ordering::SeqCst);
                            let mut slot = first_error.lock().unwrap();
                            // Report the lowest failing index so the error is reproducible.
                            if slot.as_ref().is_none_or(|(j, _)| i < *j) {
                                *slot = Some((i, e));
                            }
                            return;
                        }
                    }
                });
            }
        });
        match first_error.into_inner().unwrap() {
            Some((_, e)) => Err(e),
            None => Ok(correct.into_inner()),
        }
    }
}

impl Utility for AugmentationUtility<'_> {
    fn players(&self) -> usize {
        self.manifest.len()
    }

    fn evaluate(&self, coalition: &Coalition) -> Result<f64, OracleError> {
        match self.correct(coalition) {
            Ok(c) => Ok(c as f64 / self.questions.len() as f64),
            Err(e) => {
                let err = OracleError::new(e.to_string());
                *self.last_error.lock().unwrap() = Some(e);
                Err(err)
            }
        }
    }
}
