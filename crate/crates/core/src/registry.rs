//! Name-keyed registries of strategy objects.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{GrushinError, Result};

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Arc<T>>,
}

impl<T: ?Sized> Clone for Registry<T> {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            entries: self.entries.clone(),
        }
    }
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_map(kind: &'static str, entries: BTreeMap<&'static str, Arc<T>>) -> Self {
        Self { kind, entries }
    }

    /// Registers `item`, replacing any previous entry under the same name.
    pub fn register(&mut self, name: &'static str, item: Arc<T>) -> Option<Arc<T>> {
        self.entries.insert(name, item)
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| GrushinError::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Send + Sync {
        fn hi(&self) -> &'static str;
    }
    struct A;
    impl Greeter for A {
        fn hi(&self) -> &'static str {
            "a"
        }
    }

    #[test]
    fn lookup_and_unknown_name() {
        let mut r: Registry<dyn Greeter> = Registry::new("greeter");
        r.register("a", Arc::new(A));
        assert_eq!(r.get("a").unwrap().hi(), "a");
        let err = r.get("b").err().unwrap();
        assert!(err.to_string().contains("available: a"));
    }
}
