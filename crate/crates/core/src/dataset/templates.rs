//! Few-shot prompt templates for the critic model.

use super::TaskCategory;

const LOCATOR_INSTRUCTION: &str = "Given an {instruction type}, answer, and external knowledge passage, your job is to determine whether the passage is relevant to the question and can provide useful information for obtaining the answer. If the passage meets this requirement, respond with [Relevant] and extract useful spans from the passage. The extracted spans consist of complete sentences to make the extracted span understandable standalone.";

const LOCATOR_SHOTS: &str = "Question: Who won the 2016 ncaa football national championship?

Answer: The 2015 - 2016 season's ncaa national football championship game was played between the Clemson Tigers and the Alabama Crimson Tide on January 11, 2016. The Alabama Crimson Tide won the game by holding off the undefeated Clemson Tigers 45–40 in the fourth quarter.

Passage: The 2016 College Football Playoff National Championship was a bowl game that determined a national champion of NCAA Division I FBS college football for the 2015 season. It was played at University of Phoenix Stadium in Glendale, Arizona on January 11, 2016, and was the culminating game of the 2015–16 bowl season. The game was played between the winners of two pre-designated semifinal bowls played on December 31, 2015: the No. 1 Clemson Tigers, who beat the No. 4 Oklahoma Sooners 37–17 at the Orange Bowl, coached by Dabo Swinney in his 8th season, and the No. 2 Alabama Crimson Tide, who shut out the No. 3 Michigan State Spartans 38–0 at the

Rating: [Relevant]

Extracted span: It was played at University of Phoenix Stadium in Glendale, Arizona on January 11, 2016, and was the culminating game of the 2015–16 bowl season.

Question: Where was three billboards outside ebbing missouri film?

Answer: Principal filming for Three Billboards Outside Ebbing, Missouri was in Sylva, North Carolina. The actual billboards for the film were put in a pasture near Black Mountain, North Carolina, and the billboard scenes were filmed there because that location was better.

Passage: actual sign appeared in the film. The musical score was written by Carter Burwell, who had also supplied the score for McDonagh's films \"In Bruges\" and \"Seven Psychopaths\". As well as Burwell's score, the film features songs by ABBA, Joan Baez, The Felice Brothers, the Four Tops, Monsters of Folk, and Townes Van Zandt. \"Three Billboards Outside Ebbing, Missouri\" premiered in competition at the 74th Venice International Film Festival on September 4, 2017. It also had screenings at the 2017 Toronto International Film Festival, the 2017 San Sebastián International Film Festival (where it won the Audience Award), the BFI London

Rating: [Irrelevant]

Extracted span: None";

const LOCATOR_QUERY: &str = "Question: {input}

Answer: {output}

Passage: {text}

Rating:";

const QA_INTENT_INSTRUCTION: &str = "Given a question, provide knowledge search intent to help better retrieve the answer from external document on the web (e.g., Wikipedia). Split the intent with ';' and write an explanation.";

const QA_INTENT_SHOTS: &str = "Question: Which magazine was started first Arthur's Magazine or First for Women?

Search Intent: Arthur's Magazine publication year; First for Women publication year

Explanation: By splitting the search into two parts, each focusing on the foundation date of the respective magazines. This approach allows for a direct comparison of their start dates to determine which magazine was started first.

Question: What is the legal age of marriage, without parental consent or other authorization, in Nebraska?

Search Intent:  legal age of marriage in Nebraska without parental consent

Explanation: This intent directly targets the core of the question, ensuring that the search results will specifically address the legal stipulations surrounding marriage age in Nebraska, making it easier to provide a precise answer.

Question: Californian rock band Lit recorded A Place in the Sun in 1995, but what's their best known song?

Search Intent: Californian rock band Lit's most famous and popular songs

Explanation: The search focuses on identifying the most popular or well-recognized song by the Californian rock band Lit. This does not require information about the album A Place in the Sun or its recording date, but rather seeks to find which song by Lit is generally considered their biggest hit or most iconic track.";

const QA_INTENT_QUERY: &str = "Question: {input}

Search Intent:";

const GENERAL_INTENT_INSTRUCTION: &str = "Given an instruction, provide clarified knowledge search intent to help better retrieve the answer from external document on the web (e.g., Wikipedia). If there are different intents, split them with ';'. ";

const GENERAL_INTENT_SHOTS: &str = "Instruction: Write a response that appropriately completes the request.\\n\\n Instruction:\\n Name some nations with a monarchy government.

Search Intent: nations with a monarchy government

Explanation: The search focuses on nations with a monarchy government.

Instruction: Tell me two advantages of using AI assistants.?

Search Intent: Advantages of Artificial Intelligence Assistants

Explanation: The question \"Tell me two advantages of using AI assistants?\" has a search intent focused on understanding the benefits of AI assistants. The query seeks to identify two specific advantages of using AI assistants.

Instruction: Task: Come up with 5 example datasets that demonstrate the use of natural language processing.\\n <|Input|>: <No input>

Search Intent: natural language processing example dataset

Explanation: the instruction asks for 5 example datasets that demonstrate the use of natural language processing (NLP). To determine the search intent, you need to identify the core elements of the question, which are \"natural language processing\" and \"example datasets.";

const GENERAL_INTENT_QUERY: &str = "Instruction: {input}

Search Intent:";

const DIALOGUE_INTENT_INSTRUCTION: &str = "Given a question, answer and chat history separated by new lines, provide a knowledge search intent for the question to help better obtain answers from external documents on the web (e.g., Wikipedia). The intent needs to consider important and necessary contextual information from history so that it can be fully understood.";

const DIALOGUE_INTENT_SHOTS: &str = "History: History: What can you tell me about Gary Cherone?
\\n Gary Francis Caine Cherone is an American rock singer and songwriter, known for his work as the lead vocalist of Extreme and for his short stint for Van Halen.
\\n Did Gary Cherone sing well?
\\n Yes, Gary Cherone is also known for his work as the lead vocalist of the Boston rock group Extreme.
\\n What significant fact can you tell me about Gary Cherone that you liked?
\\n I like that Gary Cherone remained in contact and on good terms with Van Halen.
\\n What did Gary Cherone do after Van Halen?
\\n After his departure from Van Halen, Gary Cherone returned to Boston and put together a new project, Tribe of Judah.

Question: Did they release any albums during that time frame?

Answer: After Gary Cherone, Eddie Van Halen recovered from his hip surgery in November 1999, and no official statements were made by Van Halen and no music was released.

Explanation:
The search intent arises from the user's interest in Gary Cherone's activities after leaving Van Halen. Therefore, the question \"Did they release any albums during that time frame?\" is interpreted as the user wanting to know if Van Halen released any albums after Cherone's departure.

Search Intent: Any album released by Eddie Van Halen after Gary Cherone left

History: Where does Call of the Dead take place\\n It takes place in a desolate area of the Siberian tundra next to the frozen ruins of a broken cargo ship and a old Soviet lighthouse.\\n What is Call ForThe Dead's theme\\n The players are once again are tasked with surviving the never-ending onslaught of the Zombie hordes, while also dealing with a new, dangerous threat.

Question: What is the genre?

Answer: The genre is crime, spy novel.

Search Intent: the genre of Call For The Dead

Explanation: Based on the history and the content of the question, the search intent is to determine the genre or category to which \"Call For The Dead\" belongs. The user is seeking to identify the specific classification of this work within entertainment or gaming.";

const DIALOGUE_INTENT_QUERY: &str = "History: {history}

Question: {input}

Answer: {output}

Search Intent:";

fn assemble(instruction: &str, shots: &str, query: &str) -> String {
    format!("Instruction:\n{instruction}\n\n{shots}\n\n{query}")
}

/// Prompt asking the critic for search intents. Dialogue prompts take the
/// history and final question separately; `history` is ignored elsewhere.
pub fn intent_prompt(task: TaskCategory, input: &str, output: &str, history: &str) -> String {
    match task {
        TaskCategory::General => {
            assemble(GENERAL_INTENT_INSTRUCTION, GENERAL_INTENT_SHOTS, GENERAL_INTENT_QUERY).replace("{input}", input)
        }
        TaskCategory::Dialogue => assemble(
            DIALOGUE_INTENT_INSTRUCTION,
            DIALOGUE_INTENT_SHOTS,
            DIALOGUE_INTENT_QUERY,
        )
        .replace("{history}", history)
        .replace("{input}", input)
        .replace("{output}", output),
        TaskCategory::OpenQa | TaskCategory::Commonsense | TaskCategory::FactVerification => {
            assemble(QA_INTENT_INSTRUCTION, QA_INTENT_SHOTS, QA_INTENT_QUERY).replace("{input}", input)
        }
    }
}

/// Prompt asking the critic whether `text` supports the answer.
pub fn locator_prompt(task: TaskCategory, input: &str, output: &str, text: &str) -> String {
    let kind = if task == TaskCategory::General {
        "instruction"
    } else {
        "question"
    };
    let head = format!(
        "Instruction:\n{}\n\n{LOCATOR_SHOTS}\n\n",
        LOCATOR_INSTRUCTION.replace("{instruction type}", kind)
    );
    let query = LOCATOR_QUERY
        .replacen("{input}", "\u{0}", 1)
        .replacen("{output}", "\u{1}", 1)
        .replacen("{text}", "\u{2}", 1)
        .replace('\u{0}', input)
        .replace('\u{1}', output)
        .replace('\u{2}', text);
    head + &query
}
