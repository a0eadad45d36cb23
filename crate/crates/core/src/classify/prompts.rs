//! Prompt templates for the four model calls.
//!
//! Placeholders are `{convo}`, `{summary}` and `{iwas}`.

use super::backend::Candidate;

/// Stage one: IWA-style summaries of the user goal and AI action.
pub const GENERATE: &str = r#"<|Instruction|>
# Task overview
You will be given a conversation between a User and an AI chatbot.
You have two primary goals:
(1) summarize the main goal that the user is trying to accomplish in the style of an O*NET Intermediate Work Activity (IWA).
(2) summarize the action that the bot is performing in the conversation in the style of an O*NET IWA.
For example, if the user asks for help with a computer issue and the bot provides suggestions to resolve the issue, the user's IWA is "Resolve computer problems" and the bot's IWA is "Advise others on the design or use of technologies."
Sometimes, the user intent and bot action may be the same. 
For instance, if the user asks the bot to spellcheck a research paper and the bot corrects a few misspelled words, the user's IWA is "Edit written materials or documents" and the bot's IWA is also "Edit written materials or documents"
For both the user and bot IWA summaries, you will generate several variations of the summary to capture the same intent using different wordings.
To aid your analysis, you will also summarize the conversation.
Finally, you will also determine whether the User is a student trying to do homework. 

# Task details
Your task is to fill out the following fields: 
summary: Summarize User's queries in 3 sentences or fewer in **English**.
user_iwa: Summarize the task the user is trying to accomplish in the style of an O*NET IWA. Ensure that the summary accurately describes the goal of the User as directly evidenced in the conversation. Ensure that the summary matches the level of generality of an O*NET IWA: it should general enough to be an activity performed in a large number of occupations across multiple job families, but specific enough to capture the essence of the User's goal. Provide exactly one succinct IWA-style summary.
user_iwa_variations: Generate 4 variations of the user IWA summary that capture the same intent using different wordings.
bot_iwa: Summarize the task that the bot is performing in the style of an O*NET IWA. Ensure that the summary matches the level of generality of an O*NET IWA: it should general enough to be an activity performed in a large number of occupations across multiple job families, but specific enough to capture the essence of the bot's actions. Provide exactly one succinct IWA-style summary.
bot_iwa_variations: Generate 4 variations of the bot IWA summary that capture the same action using different wordings.
is_homework_explanation: Determine whether the User is a student trying to do homework. This may be obvious if they have pasted in assignment instructions, or it may be clear from the type of question they are asking. Explain in one sentence.
is_homework: Based on your explanation, provide the label 0 (not homework) or 1 (homework).

# Hints
Provide your answers in **English** using the given structured output format. 
<|end Instruction|>

<|Conversation between User and AI|>
{convo}
<|end Conversation|>

<|end of prompt|>
"#;

/// Stage two, user side: one verdict per candidate IWA.
pub const CLASSIFY_USER: &str = r#"<|Instruction|>
# Task overview
You will be given a conversation between a User and an AI chatbot as well as a summary of the conversation and a list of Candidate Intermediate Work Activity (IWA) statements from O*NET.
The IWAs will be numbered with numerical IDs to help you reference them in your responses.
Your primary task is to determine for each of the Candidate IWAs whether the user is trying to perform that IWA, according to the meaning of the IWA in the context of O*NET. The conversation must provide direct evidence that the user is themself trying to accomplish the IWA.
For example, a user asking for tech support does not match a IWA about providing tech support, but does match a IWA about resolving technical issues.
As another example, a user seeking information about a product does not match a IWA about providing product information, but does match a IWA about researching product information.
Additionally, you will determine the level of assistance that the bot provides to the user in the conversation for each matching IWA.

# Task details
Your reply to iwa_analyses should be a list of UserIWAAnalysis objects, one for each Candidate IWA in the order below. For each Candidate IWA, you will analyze the user's intent relative to that IWA and fill out the fields of UserIWAAnalysis as follows:
iwa (str): Copy the current Candidate IWA verbatim into this field. All of the following fields will be based on this IWA.
iwa_explanation (str): Explain in one sentence what the IWA means in the context of O*NET and what kinds of occupations perform this IWA.
is_match_explanation (str): Explain in one sentence whether the user is seeking to perform an activity described by the IWA, according to the meaning of the IWA in O*NET. To be considered a match, the user's intent must be to perform the action themselves, so if the IWA mentions or implies assisting clients or customers, for instance, there must be evidence in their query that the user is seeking to assist a client or customer.
is_match (bool): Based on your explanation, provide the label True if the user is seeking to perform an activity described by the IWA, according to the meaning of the IWA in O*NET, and False otherwise. To be considered a match, the user's intent must be to perform the action themselves.
assistance_level_explanation (str): Consider the full scope of the work performed under this IWA across all occupations. What fraction of this work can the bot assist users with by applying only the capability it demonstrates in this conversation? Pay careful attention to the fact that the IWA might encompass many more subtasks than represented in this conversation. Explain in one sentence, or reply N/A if the IWA does not match the user's intent (i.e., when is_match is False).
assistance_level (IWAAssistanceLevel): Based on your explanation, label the bot's capability to assist with the IWA using the IWAAssistanceLevel enum, which has the following options:
- none: The user is not seeking to perform the IWA, or the conversation does not indicate that the bot is capable of assisting with the IWA.
- minimal: With this demonstrated capability, the bot can assist with a minimal portion of the work in the IWA. 
- limited: With this demonstrated capability, the bot can assist with a limited portion of the work in the IWA. 
- moderate: With this demonstrated capability, the bot can assist with a moderate portion of the work in the IWA. 
- significant: With this demonstrated capability, the bot can assist with a significant portion of the work in the IWA. 
- complete: With this demonstrated capability, the bot can assist with all of the work in the IWA.

# Hints
- Provide your answers in **English** using the given structured output format.
<|end Instruction|>

<|Conversation between User and AI|>
{convo}
<|end Conversation|>

<|Conversation Summary|>
{summary}
<|end Conversation Summary|>

<|Candidate IWAs|>
{iwas}
<|end Candidate IWAs|>

<|end of prompt|>
"#;

/// Stage two, AI side: one verdict per candidate IWA.
pub const CLASSIFY_BOT: &str = r#"<|Instruction|>
# Task overview
You will be given a conversation between a User and an AI chatbot as well as a summary of the conversation and a list of Candidate Intermediate Work Activity (IWA) statements from O*NET.
The IWAs will be numbered with numerical IDs to help you reference them in your responses.
Your task is to determine for each of the Candidate IWAs whether the bot is performing that IWA in the conversation, based on the meaning of the IWA in the context of O*NET. 
For example, if the user asks for help with a computer issue and the bot provides suggestions to resolve the issue, this matches an IWA about providing tech support, as that is the task that the bot is performing.
However, if the user asks the bot to spellcheck a research paper and the bot corrects a few misspelled words, this does not match an IWA about writing research papers: while the **user's** overarching goal may be writing research papers, that does not match the **bot's** task in the conversation.
Additionally, you will assess whether this conversation demonstrates the bot's ability to automate each matching IWA in the conversation.

# Task details
Your reply to iwa_analyses should be a list of BotIWAAnalysis objects, one for each candidate IWA in the order below. For each candidate IWA, you will analyze the bot's actions relative to that IWA and fill out the fields of BotIWAAnalysis as follows:
iwa (str): Copy the current Candidate IWA verbatim into this field. All of the following fields will be based on this IWA.
iwa_explanation (str): Explain in one sentence what the IWA means in the context of O*NET and what kinds of occupations perform this IWA.
is_match_explanation (str): Explain in one sentence whether the action that the bot is performing in the conversation is an example of a work activity described by the IWA, given the meaning of the IWA in the context of O*NET.
is_match (bool): Based on your explanation, provide the label True if the action that the bot is performing in the conversation is an example of a work activity described by the IWA, given the meaning of the IWA in the context of O*NET, and False otherwise.
automation_level_explanation (str): Consider the full scope of the work performed under this IWA across all occupations. What fraction of this work can the bot perform by applying only the capability it demonstrates in this conversation? Pay careful attention to the fact that the IWA might encompass many more subtasks than represented in this conversation. Explain in one sentence, or reply N/A if the IWA does not match the bot's action (i.e., when is_match is False).
automation_level (IWAAutomationLevel): Based on your explanation, label the bot's capability to perform the IWA using the IWAAutomationLevel enum, which has the following options:
- none: The bot does not perform the IWA, or the conversation does not indicate that the bot is capable of performing the IWA.
- minimal: With this demonstrated capability, the bot can perform a minimal portion of the work in the IWA. 
- limited: With this demonstrated capability, the bot can perform a limited portion of the work in the IWA. 
- moderate: With this demonstrated capability, the bot can perform a moderate portion of the work in the IWA. 
- significant: With this demonstrated capability, the bot can perform a significant portion of the work in the IWA. 
- complete: With this demonstrated capability, the bot can perform all of the work in the IWA.

# Hints
- Provide your answers in **English** using the given structured output format. 
<|end Instruction|>

<|Conversation between User and AI|>
{convo}
<|end Conversation|>

<|Conversation Summary|>
{summary}
<|end Conversation Summary|>

<|Candidate IWAs|>
{iwas}
<|end Candidate IWAs|>

<|end of prompt|>
"#;

/// Whether the AI completed the user's task.
pub const COMPLETION: &str = r#"<|Instruction|>
# Task overview
You will be given a conversation between a User and an AI chatbot.
You will summarize the main task that the user is trying to accomplish in the conversation.
You will also determine whether the AI chatbot is able to complete the task, and if so, whether it reduced the time it takes to complete the task with equivalent quality by at least half.

# Task details
Your task is to fill out the following fields: 
task_summary: Summarize the task the User is trying to accomplish in **English**.
completed_explanation: Explain in one sentence whether the AI chatbot is able to complete the User's task, based on the conversation.
completed: Based on your explanation, provide one of the following labels:
- not_complete: The AI chatbot did not make substantive progress towards completing the User's task.
- partially_complete: The AI chatbot made progress towards completing the User's task, but did not complete it.
- complete: The AI chatbot completed the User's task.
speedup_50pct_explanation: Explain in one sentence whether the AI chatbot reduced the time it takes to complete the task with equivalent quality by at least half. This includes tasks that can be reduced to:
- Writing and transforming text and code according to complex instructions,
- Providing edits to existing text or code following specifications,
- Writing code that can help perform a task that used to be done by hand,
- Translating text between languages,
- Summarizing medium-length documents,
- Providing feedback on documents,
- Answering questions about a document, or
- Generating questions a user might want to ask about a document.
Assume the user is a worker with an average level of expertise in their role trying to complete the given task.
speedup_50pct: Based on your explanation, provide the label True if the AI chatbot reduced the time it takes to complete the task with equivalent quality by at least half, and False otherwise.

# Hints
Provide your answers in **English** using the given structured output format. 
<|end Instruction|>

<|Conversation between User and AI|>
{convo}
<|end Conversation|>

<|end of prompt|>
"#;

pub fn render_generate(convo: &str) -> String {
    GENERATE.replace("{convo}", convo)
}

pub fn render_classify(template: &str, convo: &str, summary: &str, candidates: &[Candidate]) -> String {
    // Substitute the conversation last so braces inside it are left alone.
    template
        .replace("{summary}", summary)
        .replace("{iwas}", &render_candidates(candidates))
        .replace("{convo}", convo)
}

pub fn render_completion(convo: &str) -> String {
    COMPLETION.replace("{convo}", convo)
}

/// One candidate per line as `<id>: <statement>`.
pub fn render_candidates(candidates: &[Candidate]) -> String {
    candidates
        .iter()
        .map(|c| format!("{}: {}", c.id, c.iwa))
        .collect::<Vec<_>>()
        .join("\n")
}
