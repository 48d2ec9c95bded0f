//! Opt-in capture of named intermediate activations for gradient analysis.

use std::cell::RefCell;
use std::rc::Rc;

use gsr_autograd::Tensor;

/// Shared recorder handed down through forward passes. Recorded tensors keep
/// their gradient after `backward`.
#[derive(Clone, Default)]
pub struct Trace(Rc<RefCell<Option<Vec<(String, Tensor)>>>>);

impl Trace {
    /// A recorder that is already capturing.
    pub fn recording() -> Self {
        let t = Self::default();
        t.start();
        t
    }

    pub fn start(&self) {
        *self.0.borrow_mut() = Some(Vec::new());
    }

    pub fn is_recording(&self) -> bool {
        self.0.borrow().is_some()
    }

    pub fn record(&self, name: impl FnOnce() -> String, t: &Tensor) {
        if let Some(list) = self.0.borrow_mut().as_mut() {
            t.retain_grad();
            list.push((name(), t.clone()));
        }
    }

    pub fn get(&self, name: &str) -> Option<Tensor> {
        self.0.borrow().as_ref()?.iter().find(|(n, _)| n == name).map(|(_, t)| t.clone())
    }

    /// Stops recording and returns what was captured.
    pub fn take(&self) -> Vec<(String, Tensor)> {
        self.0.borrow_mut().take().unwrap_or_default()
    }
}
