use super::vision::{chroma, SALIENT_CHROMA};
use crate::backends::{BackendError, PersonaGenerator};
use crate::persona::{Language, Persona, PersonaRequest, VoiceId};
use crate::protocol::ScopeFrame;

struct Archetype {
    name: (&'static str, &'static str),
    gender: (&'static str, &'static str),
    age: (&'static str, &'static str),
    personality: (&'static str, &'static str),
    backstory: (&'static str, &'static str),
    voice: VoiceId,
}

macro_rules! archetype {
    ($name:expr, $gender:expr, $age:expr, $pers:expr, $back:expr, $voice:ident) => {
        Archetype {
            name: $name,
            gender: $gender,
            age: $age,
            personality: $pers,
            backstory: $back,
            voice: VoiceId::$voice,
        }
    };
}

/// Indexed by 30-degree hue bucket; the last entry covers colourless objects.
const ARCHETYPES: [Archetype; 13] = [
    archetype!(("Rosa", "小红"), ("female", "女"), ("about 30", "三十岁左右"),
        ("Bold and a little dramatic.", "大胆，有点戏剧化。"),
        ("Painted in a hurry on a rainy afternoon.", "在一个下雨的午后被匆匆上色。"), YoungFemale),
    archetype!(("Jack", "南瓜杰克"), ("male", "男"), ("a few months", "几个月大"),
        ("Cheerful and fond of bad jokes.", "开朗，爱讲冷笑话。"),
        ("Grew up in a patch behind the school.", "在学校后面的菜地里长大。"), ChildMale),
    archetype!(("Sunny", "阳阳"), ("female", "女"), ("young", "年轻"),
        ("Optimistic and talkative.", "乐观又健谈。"),
        ("Spent summers on a sunny windowsill.", "在洒满阳光的窗台上度过夏天。"), ChildFemale),
    archetype!(("Lemon", "柠檬"), ("male", "男"), ("about 20", "二十岁左右"),
        ("Sharp-witted and honest.", "机智而坦率。"),
        ("Fell off a fruit cart and never looked back.", "从水果车上掉下来后再也没回头。"), YoungMale),
    archetype!(("Fern", "小蕨"), ("female", "女"), ("ancient", "很老"),
        ("Patient and wise.", "耐心而睿智。"),
        ("Has watched the room change for decades.", "看着这个房间变化了几十年。"), ElderlyFemale),
    archetype!(("Basil", "罗勒"), ("male", "男"), ("middle-aged", "中年"),
        ("Calm and a careful listener.", "沉稳，善于倾听。"),
        ("Came from a garden centre by the river.", "来自河边的园艺店。"), ElderlyMale),
    archetype!(("Mint", "薄荷"), ("nonbinary", "无性别"), ("young", "年轻"),
        ("Fresh, curious and quick.", "清新，好奇，反应快。"),
        ("Keeps the desk tidy when nobody looks.", "没人看时会悄悄整理桌面。"), Neutral),
    archetype!(("Marina", "海蓝"), ("female", "女"), ("about 40", "四十岁左右"),
        ("Dreamy and gentle.", "爱幻想，很温柔。"),
        ("Once sailed across a bathtub ocean.", "曾经横渡过浴缸里的大海。"), YoungFemale),
    archetype!(("Navy", "海军"), ("male", "男"), ("about 50", "五十岁左右"),
        ("Disciplined and loyal.", "自律而忠诚。"),
        ("Stood guard on the bookshelf for years.", "在书架上站岗多年。"), ElderlyMale),
    archetype!(("Indigo", "靛蓝"), ("male", "男"), ("young", "年轻"),
        ("Thoughtful and a bit shy.", "深思熟虑，有点害羞。"),
        ("Filled with notes nobody has read.", "写满了没人读过的笔记。"), YoungMale),
    archetype!(("Violet", "紫罗兰"), ("female", "女"), ("elderly", "年长"),
        ("Elegant and mysterious.", "优雅而神秘。"),
        ("Inherited from a grandmother's dresser.", "从祖母的梳妆台传下来。"), ElderlyFemale),
    archetype!(("Ruby", "红宝"), ("female", "女"), ("a child", "小孩"),
        ("Playful and bouncy.", "调皮又活泼。"),
        ("Won first prize at a school fair.", "在学校义卖会上得了一等奖。"), ChildFemale),
    archetype!(("Pebble", "石头"), ("nonbinary", "无性别"), ("timeless", "不知多少岁"),
        ("Quiet and steady.", "安静而稳重。"),
        ("Nobody remembers where it came from.", "没人记得它从哪里来。"), Neutral),
];

/// 30-degree hue bucket (0..12) holding the most saturated pixels, if any.
pub fn dominant_hue_bucket(frame: &ScopeFrame) -> Option<usize> {
    let mut counts = [0usize; 12];
    for p in frame.pixels.chunks_exact(3) {
        let rgb = [p[0], p[1], p[2]];
        if chroma(rgb) <= SALIENT_CHROMA {
            continue;
        }
        counts[(hue_degrees(rgb) / 30.0) as usize % 12] += 1;
    }
    let (bucket, &count) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
    (count > 0).then_some(bucket)
}

fn hue_degrees([r, g, b]: [u8; 3]) -> f64 {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d == 0.0 {
        return 0.0;
    }
    let h = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    h * 60.0
}

/// Rule table keyed by the frame's dominant hue.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockPersonaGenerator;

impl MockPersonaGenerator {
    pub fn persona_for(frame: &ScopeFrame, language: Language) -> Persona {
        let a = &ARCHETYPES[dominant_hue_bucket(frame).unwrap_or(12)];
        let pick = |pair: (&str, &str)| match language {
            Language::En => pair.0.to_string(),
            Language::Zh => pair.1.to_string(),
        };
        Persona {
            name: pick(a.name),
            gender: pick(a.gender),
            age: pick(a.age),
            personality: pick(a.personality),
            backstory: pick(a.backstory),
            voice: a.voice,
            language,
        }
    }
}

impl PersonaGenerator for MockPersonaGenerator {
    fn generate(&self, request: &PersonaRequest) -> Result<String, BackendError> {
        Ok(Self::persona_for(&request.frame, request.language).to_canonical_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::validate_persona;
    use std::sync::Arc;

    #[test]
    fn hue_buckets() {
        assert_eq!(hue_degrees([255, 0, 0]), 0.0);
        assert_eq!(hue_degrees([0, 255, 0]), 120.0);
        assert_eq!(hue_degrees([0, 0, 255]), 240.0);
        assert_eq!(dominant_hue_bucket(&ScopeFrame::filled(0, 4, 4, [30, 30, 200])), Some(8));
        assert_eq!(dominant_hue_bucket(&ScopeFrame::filled(0, 4, 4, [90, 90, 90])), None);
    }

    #[test]
    fn every_archetype_validates() {
        for lang in [Language::En, Language::Zh] {
            for rgb in [[200, 30, 30], [30, 200, 30], [30, 30, 200], [100, 100, 100]] {
                let req = PersonaRequest::new(Arc::new(ScopeFrame::filled(0, 4, 4, rgb)), lang);
                let doc = MockPersonaGenerator.generate(&req).unwrap();
                let p = validate_persona(&doc).unwrap();
                assert_eq!(p.language, lang);
                assert!(!p.name.is_empty());
            }
        }
        for a in &ARCHETYPES {
            assert!(!a.name.0.is_empty() && !a.name.1.is_empty());
        }
    }
}
