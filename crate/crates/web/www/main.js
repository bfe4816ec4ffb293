import init, { hop_curve, contacts, min_bits } from './pkg/kadhop_web.js';

const COLORS = { lower: '#1f77b4', upper: '#d62728' };

function values(form) {
  return Object.fromEntries(new FormData(form).entries());
}

function axes(ctx, w, h, pad, xmax, ymax, xlabel) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = '#888';
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
  ctx.fillStyle = '#444';
  ctx.font = '12px sans-serif';
  for (let i = 0; i <= 4; i++) {
    const y = h - pad - (i / 4) * (h - 2 * pad);
    ctx.fillText((ymax * i / 4).toFixed(2), 4, y + 4);
  }
  ctx.fillText(xlabel, w / 2, h - 6);
  return {
    x: v => pad + (v / xmax) * (w - 2 * pad),
    y: v => h - pad - (v / ymax) * (h - 2 * pad),
  };
}

function report(section, text, isError) {
  const info = section.querySelector('.info');
  info.textContent = text;
  info.className = isError ? 'info error' : 'info';
}

function drawHops(section) {
  const f = values(section.querySelector('form'));
  let doc;
  try {
    doc = JSON.parse(hop_curve(f.preset, Number(f.n), Number(f.alpha), Number(f.beta), Number(f.delta), Number(f.stale)));
  } catch (e) {
    report(section, String(e), true);
    return;
  }
  const canvas = section.querySelector('canvas');
  const ctx = canvas.getContext('2d');
  const hops = doc.curves[0].cumulative.length;
  const map = axes(ctx, canvas.width, canvas.height, 40, hops, 1, 'hops');
  for (let h = 1; h <= hops; h++) {
    ctx.fillText(String(h), map.x(h) - 3, canvas.height - 24);
  }
  for (const c of doc.curves) {
    ctx.strokeStyle = COLORS[c.bound];
    ctx.beginPath();
    c.cumulative.forEach((v, i) => {
      const x = map.x(i + 1), y = map.y(v);
      if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
  const means = doc.curves.map(c => `${c.bound} mean ${c.mean.toFixed(4)}`).join(', ');
  report(section, `b̃ = ${doc.b_reduced}, error bound ${doc.error_bound.toExponential(2)}, ${doc.states} states\n${means}`);
}

function drawContacts(section) {
  const f = values(section.querySelector('form'));
  let doc;
  try {
    doc = JSON.parse(contacts(f.preset, Number(f.n), Number(f.d), Number(f.gamma), 0.001));
  } catch (e) {
    report(section, String(e), true);
    return;
  }
  const canvas = section.querySelector('canvas');
  const ctx = canvas.getContext('2d');
  const bars = doc.closest.length;
  const ymax = Math.max(...doc.closest, 1e-12);
  const map = axes(ctx, canvas.width, canvas.height, 40, bars, ymax, 'distance of the closest returned contact');
  const width = (canvas.width - 80) / bars;
  ctx.fillStyle = COLORS.lower;
  doc.closest.forEach((p, d) => {
    ctx.fillRect(map.x(d) + 1, map.y(p), width - 2, map.y(0) - map.y(p));
  });
  const top = doc.outcomes.slice(0, 5).map(o => `(${o.distances.join(', ')}) ${o.p.toFixed(4)}`).join('  ');
  report(section, `b̃ = ${doc.b_reduced}, d = ${doc.d}, target returned with probability ${doc.terminal.toFixed(4)}\nmost likely: ${top}`);
}

function drawWidths(section) {
  const f = values(section.querySelector('form'));
  const table = section.querySelector('table');
  let rows;
  try {
    rows = JSON.parse(min_bits(Number(f.delta), Number(f.kappa)));
  } catch (e) {
    table.innerHTML = `<tr><td class="error">${e}</td></tr>`;
    return;
  }
  table.innerHTML = '<tr><th>n</th><th>b̃</th><th>error bound</th><th>closed form</th></tr>' +
    rows.map(r => `<tr><td>${r.n.toLocaleString()}</td><td>${r.bits}</td><td>${r.error.toExponential(2)}</td><td>${r.closed_form}</td></tr>`).join('');
}

function wire(id, draw) {
  const section = document.getElementById(id);
  section.querySelector('form').addEventListener('submit', e => {
    e.preventDefault();
    draw(section);
  });
  draw(section);
}

await init();
wire('hops', drawHops);
wire('contacts', drawContacts);
wire('widths', drawWidths);
