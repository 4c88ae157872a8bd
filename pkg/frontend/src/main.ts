import { ApiClient } from "./api.js";
import { ConsoleController, POLL_INTERVAL_MS } from "./controller.js";
import { renderApp } from "./render.js";

// Browser wiring: render into #app, poll every 5 seconds, and translate DOM
// events into controller calls. Event handlers are attached via delegation
// because the view re-renders wholesale.

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "";
const controller = new ConsoleController(new ApiClient(base));
const root = document.getElementById("app");

if (root === null) {
  throw new Error("missing #app mount point");
}

function paint(): void {
  const focused = document.activeElement;
  const typing = focused !== null && focused.id === "reply-text";
  if (typing) {
    // never repaint under the expert's cursor; banner updates wait a tick
    return;
  }
  root!.innerHTML = renderApp(controller.state);
}

async function tick(): Promise<void> {
  await controller.refresh();
  paint();
}

root.addEventListener("input", (event) => {
  const target = event.target as HTMLElement;
  if (target.id === "reply-text") {
    controller.setDraft((target as HTMLTextAreaElement).value);
    const button = document.getElementById("submit-reply") as HTMLButtonElement | null;
    if (button !== null) {
      button.disabled = !controller.canSubmit;
    }
  }
});

root.addEventListener("change", (event) => {
  const target = event.target as HTMLElement;
  if (target.id === "session-picker") {
    controller.selectSession((target as HTMLSelectElement).value);
    void tick();
  }
});

root.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const action = target.getAttribute("data-action");
  if (action === "valid" || action === "invalid" || action === "modify") {
    controller.quickAction(action);
    paint();
    const box = document.getElementById("reply-text") as HTMLTextAreaElement | null;
    box?.focus();
    box?.setSelectionRange(box.value.length, box.value.length);
  } else if (action === "toggle-numbers") {
    controller.toggleNumbers();
    paint();
  }
});

root.addEventListener("submit", (event) => {
  const target = event.target as HTMLElement;
  if (target.id === "reply-form") {
    event.preventDefault();
    void controller.submit().then(paint);
  }
});

void tick();
window.setInterval(() => void tick(), POLL_INTERVAL_MS);
