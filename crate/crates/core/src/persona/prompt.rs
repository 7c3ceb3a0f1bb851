//! Persona generation prompt. Bump [`PROMPT_VERSION`] on any wording change;
//! the version travels with every request.

use super::Language;

pub const PROMPT_VERSION: &str = "persona-v1";

const PROMPT_EN: &str = "\
You are looking at a photo of an everyday object that its owner wants to bring to life.
Imagine the object as a character and describe it.

Reply with a single JSON object and nothing else. Use exactly these keys:
  \"name\"        a short, friendly name for the object
  \"gender\"      the character's gender
  \"age\"         the character's age, in words if you like
  \"personality\" two or three sentences about how the character thinks and talks
  \"backstory\"   two or three sentences about where the object came from and what it has seen
  \"voice\"       one of ELDERLY_FEMALE, YOUNG_FEMALE, CHILD_FEMALE, ELDERLY_MALE, YOUNG_MALE, CHILD_MALE, NEUTRAL;
                pick the voice that best suits the name, gender, age and personality
  \"language\"    \"en\"

Write every value in English.";

const PROMPT_ZH: &str = "\
你正在看一张日常物品的照片，它的主人希望让它活过来。
请把这个物品想象成一个角色，并描述它。

只回复一个 JSON 对象，不要输出其他内容。必须使用以下键：
  \"name\"        物品的简短、亲切的名字
  \"gender\"      角色的性别
  \"age\"         角色的年龄，可以用文字描述
  \"personality\" 两三句话，描述角色的思考和说话方式
  \"backstory\"   两三句话，描述物品的来历和经历
  \"voice\"       从 ELDERLY_FEMALE, YOUNG_FEMALE, CHILD_FEMALE, ELDERLY_MALE, YOUNG_MALE, CHILD_MALE, NEUTRAL 中选择一个，
                选择最符合名字、性别、年龄和性格的声音
  \"language\"    \"zh\"

除 voice 和 language 外，所有值都用中文书写。";

pub fn persona_prompt(language: Language) -> &'static str {
    match language {
        Language::En => PROMPT_EN,
        Language::Zh => PROMPT_ZH,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::{VoiceId, FIELDS};

    #[test]
    fn prompts_name_every_field_and_voice() {
        for lang in [Language::En, Language::Zh] {
            let p = persona_prompt(lang);
            for f in FIELDS {
                assert!(p.contains(&format!("\"{f}\"")), "{lang}: {f}");
            }
            for v in VoiceId::ALL {
                assert!(p.contains(v.as_str()));
            }
            assert!(p.contains(&format!("\"{}\"", lang.as_str())));
        }
    }
}
