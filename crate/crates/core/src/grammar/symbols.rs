use std::collections::HashMap;
use std::fmt;

/// Dense index into a [`SymbolTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolId(pub u32);

impl SymbolId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    Terminal,
    Nonterminal,
}

/// Terminals and nonterminals live in separate namespaces, so the word `S`
/// and the nonterminal `S` are distinct symbols.
#[derive(Clone, Debug, Default)]
pub struct SymbolTable {
    names: Vec<String>,
    kinds: Vec<SymbolKind>,
    terminals: HashMap<String, SymbolId>,
    nonterminals: HashMap<String, SymbolId>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: &str, kind: SymbolKind) -> SymbolId {
        let id = SymbolId(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.kinds.push(kind);
        id
    }

    /// Returns the id of the terminal `name`, adding it if needed.
    pub fn intern_terminal(&mut self, name: &str) -> SymbolId {
        if let Some(&id) = self.terminals.get(name) {
            return id;
        }
        let id = self.push(name, SymbolKind::Terminal);
        self.terminals.insert(name.to_owned(), id);
        id
    }

    /// Returns the id of the nonterminal `name`, adding it if needed.
    pub fn intern_nonterminal(&mut self, name: &str) -> SymbolId {
        if let Some(&id) = self.nonterminals.get(name) {
            return id;
        }
        let id = self.push(name, SymbolKind::Nonterminal);
        self.nonterminals.insert(name.to_owned(), id);
        id
    }

    /// Adds a nonterminal whose name does not clash with an existing one,
    /// appending `~2`, `~3`, … to `base` as needed.
    pub fn fresh_nonterminal(&mut self, base: &str) -> SymbolId {
        let mut name = base.to_owned();
        let mut k = 1;
        while self.nonterminals.contains_key(&name) {
            k += 1;
            name = format!("{base}~{k}");
        }
        self.intern_nonterminal(&name)
    }

    pub fn terminal(&self, name: &str) -> Option<SymbolId> {
        self.terminals.get(name).copied()
    }

    pub fn nonterminal(&self, name: &str) -> Option<SymbolId> {
        self.nonterminals.get(name).copied()
    }

    pub fn name(&self, id: SymbolId) -> &str {
        &self.names[id.index()]
    }

    pub fn kind(&self, id: SymbolId) -> SymbolKind {
        self.kinds[id.index()]
    }

    pub fn is_terminal(&self, id: SymbolId) -> bool {
        self.kind(id) == SymbolKind::Terminal
    }

    pub fn is_nonterminal(&self, id: SymbolId) -> bool {
        self.kind(id) == SymbolKind::Nonterminal
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = SymbolId> + '_ {
        (0..self.names.len() as u32).map(SymbolId)
    }

    pub fn terminals(&self) -> impl Iterator<Item = SymbolId> + '_ {
        self.ids().filter(|&id| self.is_terminal(id))
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = SymbolId> + '_ {
        self.ids().filter(|&id| self.is_nonterminal(id))
    }

    pub fn num_terminals(&self) -> usize {
        self.terminals.len()
    }

    pub fn num_nonterminals(&self) -> usize {
        self.nonterminals.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_namespaces_separate() {
        let mut t = SymbolTable::new();
        let s = t.intern_nonterminal("S");
        let a = t.intern_terminal("S");
        let s2 = t.intern_nonterminal("S");
        assert_eq!(s, s2);
        assert_ne!(s, a);
        assert_eq!(t.ids().collect::<Vec<_>>(), vec![SymbolId(0), SymbolId(1)]);
        assert!(t.is_terminal(a));
        assert_eq!(t.name(a), "S");
    }

    #[test]
    fn fresh_names_avoid_collisions() {
        let mut t = SymbolTable::new();
        t.intern_nonterminal("X_1");
        let fresh = t.fresh_nonterminal("X_1");
        assert_eq!(t.name(fresh), "X_1~2");
        let again = t.fresh_nonterminal("X_1");
        assert_eq!(t.name(again), "X_1~3");
    }
}
