#![allow(dead_code)]

use longdoc_core::corpus::{build_documents, Document, Ontology, RawRecord, TaskName, TaskSpec};
use longdoc_core::synth::{generate, SynthSpec};
use longdoc_core::tokenizer::{BasicTokenizer, Vocab};

pub struct Dataset {
    pub vocab: Vocab,
    pub broad: TaskSpec,
    pub fine: TaskSpec,
    pub train: Vec<Document>,
    pub test: Vec<Document>,
}

pub fn records_to_dataset(records: &[RawRecord], n_train: usize) -> Dataset {
    let texts: Vec<&str> = records[..n_train].iter().map(|r| r.text.as_str()).collect();
    let vocab = Vocab::build(&texts, 50_000, 1).unwrap();
    let onto = Ontology::from_records(records).unwrap();
    let broad = onto.task(TaskName::Broad);
    let fine = onto.task(TaskName::Fine);
    let docs = build_documents(records, &BasicTokenizer, &vocab, &broad, &fine).unwrap();
    let test = docs[n_train..].to_vec();
    let train = docs[..n_train].to_vec();
    Dataset { vocab, broad, fine, train, test }
}

/// Generates `spec`, training on the first 90% of documents.
pub fn synthetic(spec: &SynthSpec) -> Dataset {
    let records = generate(spec).unwrap();
    let n_train = records.len() * 9 / 10;
    records_to_dataset(&records, n_train)
}
