import init, { Scene, WrinklePatch } from "./pkg/tactilemap_web.js";

const $ = (id) => document.getElementById(id);
let scene = null;

function paint(canvas, size, rgba) {
  canvas.width = size;
  canvas.height = size;
  const img = new ImageData(new Uint8ClampedArray(rgba), size, size);
  canvas.getContext("2d").putImageData(img, 0, 0);
}

function show(el, f) {
  try {
    el.textContent = JSON.stringify(JSON.parse(f()), null, 2);
  } catch (e) {
    el.textContent = String(e);
  }
}

function render() {
  if (scene) scene.free();
  scene = new Scene($("layout").value, +$("width").value, +$("depth").value, 256, +$("noise").value, 1);
  paint($("frame"), scene.size(), scene.image_rgba());
}

await init();

$("render").onclick = () => {
  try {
    render();
  } catch (e) {
    $("recon-out").textContent = String(e);
  }
};

$("cutoff").oninput = () => ($("cutoff-v").textContent = $("cutoff").value);

$("recon").onclick = () => {
  if (!scene) render();
  show($("recon-out"), () => scene.reconstruct(+$("cutoff").value));
  if (scene.recon_size() > 0) paint($("height"), scene.recon_size(), scene.recon_rgba());
};

$("wrinkle").onclick = () => {
  let patch;
  try {
    patch = new WrinklePatch(200, +$("amp").value, +$("period").value, +$("angle").value);
  } catch (e) {
    $("wrinkle-out").textContent = String(e);
    return;
  }
  show($("wrinkle-out"), () => patch.analyze(+$("radius").value, 7));
  paint($("skin"), patch.size(), patch.overlay_rgba());
  patch.free();
};

render();
