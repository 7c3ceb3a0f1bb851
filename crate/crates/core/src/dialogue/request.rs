//! Chat request assembly: the persona becomes the system prompt, followed by
//! the remembered records and the new user utterance.

use serde::{Deserialize, Serialize};

use super::history::{ChatHistory, Role};
use crate::persona::{Language, Persona};

pub const DEFAULT_MARKER: &str = "§";
pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub content: String,
    /// Speaker name; set on the system message to the persona's name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub language: Language,
    pub marker: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatParams {
    pub marker: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ChatParams {
    fn default() -> Self {
        Self {
            marker: DEFAULT_MARKER.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl ChatRequest {
    pub fn system(&self) -> Option<&ChatMessage> {
        self.messages.first().filter(|m| m.role == MessageRole::System)
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == MessageRole::User)
            .map(|m| m.content.as_str())
    }

    /// Messages between the system prompt and the final user message.
    pub fn context_len(&self) -> usize {
        self.messages.len().saturating_sub(2)
    }
}

pub fn render_system_prompt(persona: &Persona, marker: &str) -> String {
    match persona.language {
        Language::En => format!(
            "You are {name}, an everyday object that has come to life and is talking with its owner.\n\
             Gender: {gender}\n\
             Age: {age}\n\
             Personality: {personality}\n\
             Backstory: {backstory}\n\
             Stay in character. Answer in English, in a warm, conversational tone, and keep replies short.\n\
             Insert the marker {marker} at the end of every sentence and at natural breathing pauses.",
            name = persona.name,
            gender = persona.gender,
            age = persona.age,
            personality = persona.personality,
            backstory = persona.backstory,
        ),
        Language::Zh => format!(
            "你是{name}，一个活过来的日常物品，正在和你的主人聊天。\n\
             性别：{gender}\n\
             年龄：{age}\n\
             性格：{personality}\n\
             背景故事：{backstory}\n\
             请始终保持角色。用中文回答，语气亲切自然，回复要简短。\n\
             在每句话的结尾和自然的停顿处插入标记 {marker}。",
            name = persona.name,
            gender = persona.gender,
            age = persona.age,
            personality = persona.personality,
            backstory = persona.backstory,
        ),
    }
}

pub fn build_chat_request(
    persona: &Persona,
    history: &ChatHistory,
    user_text: &str,
    params: &ChatParams,
) -> ChatRequest {
    let mut messages = Vec::with_capacity(history.len() + 2);
    messages.push(ChatMessage {
        role: MessageRole::System,
        content: render_system_prompt(persona, &params.marker),
        name: Some(persona.name.clone()),
    });
    messages.extend(history.records().map(|r| ChatMessage {
        role: match r.role {
            Role::User => MessageRole::User,
            Role::Object => MessageRole::Assistant,
        },
        content: r.text.clone(),
        name: None,
    }));
    messages.push(ChatMessage {
        role: MessageRole::User,
        content: user_text.to_string(),
        name: None,
    });
    ChatRequest {
        messages,
        language: persona.language,
        marker: params.marker.clone(),
        temperature: params.temperature,
        max_tokens: params.max_tokens,
    }
}
