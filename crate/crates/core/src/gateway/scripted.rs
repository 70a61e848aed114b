use std::collections::VecDeque;
use std::sync::Mutex;

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError};

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedReply {
    Text(String),
    Unavailable,
}

impl ScriptedReply {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptedReply::Text(text.into())
    }
}

#[derive(Debug)]
struct Rule {
    lane: Option<String>,
    needles: Vec<String>,
    replies: VecDeque<ScriptedReply>,
}

/// Canned backend: each rule matches requests whose lane equals the rule's
/// lane (when set) and whose messages contain every needle. The first rule with
/// replies left answers. Used to author cassettes and in tests.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Mutex<Vec<Rule>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reply_to(self, needle: impl Into<String>, reply: ScriptedReply) -> Self {
        self.push(None, vec![needle.into()], reply);
        self
    }

    pub fn reply_in_lane(self, lane: impl Into<String>, needle: impl Into<String>, reply: ScriptedReply) -> Self {
        self.push(Some(lane.into()), vec![needle.into()], reply);
        self
    }

    /// Rule that needs all `needles` to appear in the request.
    pub fn reply_matching(self, lane: Option<&str>, needles: &[&str], reply: ScriptedReply) -> Self {
        self.push(lane.map(str::to_string), needles.iter().map(|n| n.to_string()).collect(), reply);
        self
    }

    fn push(&self, lane: Option<String>, needles: Vec<String>, reply: ScriptedReply) {
        let mut rules = self.rules.lock().expect("scripted lock");
        match rules.iter_mut().find(|r| r.lane == lane && r.needles == needles) {
            Some(rule) => rule.replies.push_back(reply),
            None => rules.push(Rule { lane, needles, replies: VecDeque::from([reply]) }),
        }
    }

    /// Every request answered so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().expect("scripted lock").clone()
    }

    pub fn unused(&self) -> usize {
        self.rules.lock().expect("scripted lock").iter().map(|r| r.replies.len()).sum()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.seen.lock().expect("scripted lock").push(request.clone());
        let mut rules = self.rules.lock().expect("scripted lock");
        let rule = rules.iter_mut().find(|r| {
            !r.replies.is_empty()
                && r.lane.as_deref().is_none_or(|l| l == request.lane)
                && r.needles.iter().all(|n| request.messages.iter().any(|m| m.content.contains(n.as_str())))
        });
        let Some(rule) = rule else {
            return Err(GatewayError::BackendUnavailable {
                backend: request.backend_id.clone(),
                reason: format!("no scripted reply for {}", request.summary()),
            });
        };
        match rule.replies.pop_front().expect("non-empty checked") {
            ScriptedReply::Text(text) => Ok(ChatResponse { text, usage: None, backend_id: request.backend_id.clone() }),
            ScriptedReply::Unavailable => Err(GatewayError::BackendUnavailable {
                backend: request.backend_id.clone(),
                reason: "scripted outage".into(),
            }),
        }
    }
}
