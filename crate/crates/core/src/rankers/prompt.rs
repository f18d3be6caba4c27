use serde::Serialize;

use super::BatchRequest;

pub const DOCUMENTS_BEGIN: &str = "<<<DOCUMENTS";
pub const DOCUMENTS_END: &str = "DOCUMENTS>>>";

const SYSTEM_PROMPT: &str = "You rank documents by relevance to a query. \
Each document is identified by an opaque key that carries no meaning. \
Judge only the document text, never the key or the order of presentation.";

/// A two-message chat payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChatPrompt {
    pub system: String,
    pub user: String,
}

/// Build the ranking prompt for a batch.
///
/// The query is written as a JSON string on the first line and the documents
/// as a single JSON object between the delimiter lines, so document text can
/// never be mistaken for structure or for a key. Identical requests produce
/// byte-identical prompts.
pub fn build_prompt(request: &BatchRequest<'_>, capture_reasoning: bool) -> ChatPrompt {
    // written by hand: serde_json's map would sort the keys, and presentation
    // order must match the shuffled batch
    let body = {
        let mut out = String::from("{");
        for (i, entry) in request.entries.iter().enumerate() {
            if i > 0 {
                out.push_str(",\n");
            } else {
                out.push('\n');
            }
            out.push_str(&serde_json::to_string(&entry.key).expect("string serializes"));
            out.push_str(": ");
            out.push_str(&serde_json::to_string(entry.text).expect("string serializes"));
        }
        out.push_str("\n}");
        out
    };
    let query = serde_json::to_string(request.query).expect("string serializes");
    let answer_shape = if capture_reasoning {
        "{\"reasoning\": \"<one short paragraph>\", \"keys\": [\"<key>\", ...]}"
    } else {
        "{\"keys\": [\"<key>\", ...]}"
    };
    let user = format!(
        "Query: {query}\n{DOCUMENTS_BEGIN}\n{body}\n{DOCUMENTS_END}\n\n\
         Order all {n} keys from most to least relevant to the query. \
         Include every key exactly once. Respond with only this JSON object: {answer_shape}",
        n = request.entries.len(),
    );
    ChatPrompt {
        system: SYSTEM_PROMPT.to_string(),
        user,
    }
}

#[cfg(test)]
pub(crate) fn extract_documents(prompt: &ChatPrompt) -> Option<Vec<(String, String)>> {
    let mut lines = prompt.user.splitn(3, '\n');
    let query_line = lines.next()?;
    serde_json::from_str::<String>(query_line.strip_prefix("Query: ")?).ok()?;
    if lines.next()? != DOCUMENTS_BEGIN {
        return None;
    }
    let rest = lines.next()?;
    let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<serde_json::Value>();
    let obj = stream.next()?.ok()?;
    let end = stream.byte_offset();
    if !rest[end..].starts_with(&format!("\n{DOCUMENTS_END}\n")) {
        return None;
    }
    // Map iteration is sorted; order is irrelevant for content checks
    Some(
        obj.as_object()?
            .iter()
            .map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string()))
            .collect(),
    )
}
